//! Item/category universe and the binary item-category matrix.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::{streams, RngStream, Tensor};

const EMBEDDING_INIT_RANGE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemRecord {
    pub item_id: usize,
    pub category_id: usize,
    pub name: Option<String>,
}

/// How the initial item-embedding table is drawn.
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingInit {
    pub dim: usize,
    pub seed: u64,
}

/// Items, categories, the membership matrix `W` (`|I| x |C|`, one 1 per row)
/// and the initial item-embedding table.
#[derive(Clone, Debug)]
pub struct Catalog {
    items: Vec<ItemRecord>,
    categories: Vec<String>,
    membership: Vec<u8>,
    item_embeddings: Tensor,
}

impl Catalog {
    /// Builds a catalog from `(item_id, category_name)` rows. Category ids are
    /// assigned in order of first appearance.
    pub fn from_rows<S: AsRef<str>>(rows: &[(usize, S)], init: EmbeddingInit) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::format("catalog has no items"));
        }
        let mut category_ids: HashMap<String, usize> = HashMap::new();
        let mut categories = Vec::new();
        let mut slots: Vec<Option<ItemRecord>> = vec![None; rows.len()];
        for (item_id, cat) in rows {
            let cat = cat.as_ref().trim();
            if cat.is_empty() {
                return Err(Error::format(format!("item {item_id}: missing category reference")));
            }
            let category_id = *category_ids.entry(cat.to_string()).or_insert_with(|| {
                categories.push(cat.to_string());
                categories.len() - 1
            });
            let slot = slots.get_mut(*item_id).ok_or_else(|| {
                Error::format(format!(
                    "item id {item_id} out of range: ids must be dense 0..{}",
                    rows.len()
                ))
            })?;
            if slot.is_some() {
                return Err(Error::format(format!("duplicate item id {item_id}")));
            }
            *slot = Some(ItemRecord {
                item_id: *item_id,
                category_id,
                name: None,
            });
        }
        // n rows, n distinct ids all < n: the id set is exactly 0..n
        let items: Vec<ItemRecord> = slots.into_iter().map(|s| s.expect("dense ids")).collect();
        Self::from_items(items, categories, init)
    }

    pub fn from_items(items: Vec<ItemRecord>, categories: Vec<String>, init: EmbeddingInit) -> Result<Self> {
        if categories.len() < 2 {
            return Err(Error::format(format!(
                "catalog needs at least 2 categories, found {}",
                categories.len()
            )));
        }
        let n_cat = categories.len();
        let mut membership = vec![0u8; items.len() * n_cat];
        for (i, item) in items.iter().enumerate() {
            if item.item_id != i {
                return Err(Error::format(format!("item at position {i} has id {}", item.item_id)));
            }
            if item.category_id >= n_cat {
                return Err(Error::format(format!(
                    "item {i} references unknown category {}",
                    item.category_id
                )));
            }
            membership[i * n_cat + item.category_id] = 1;
        }
        let mut rng = RngStream::new(init.seed, streams::ITEM_EMBEDDINGS);
        let item_embeddings = Tensor::uniform(
            vec![items.len(), init.dim],
            -EMBEDDING_INIT_RANGE,
            EMBEDDING_INIT_RANGE,
            &mut rng,
        );
        Ok(Catalog {
            items,
            categories,
            membership,
            item_embeddings,
        })
    }

    /// Balanced synthetic catalog: item `i` belongs to category `i mod n_categories`.
    pub fn synthetic(n_items: usize, n_categories: usize, init: EmbeddingInit) -> Result<Self> {
        if n_items == 0 {
            return Err(Error::domain("synthetic catalog needs at least one item"));
        }
        let categories = (0..n_categories).map(|c| format!("category_{c}")).collect();
        let items = (0..n_items)
            .map(|i| ItemRecord {
                item_id: i,
                category_id: i % n_categories.max(1),
                name: None,
            })
            .collect();
        Self::from_items(items, categories, init)
    }

    pub fn parse_csv(text: &str, init: EmbeddingInit) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut rows: Vec<(usize, String)> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::format(format!("line {}: {e}", line + 1)))?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            if record.len() != 2 {
                return Err(Error::format(format!(
                    "line {}: expected `item_id,category_name`, got {} fields",
                    line + 1,
                    record.len()
                )));
            }
            let id = match record[0].parse::<usize>() {
                Ok(id) => id,
                Err(_) if line == 0 => continue, // header
                Err(_) => {
                    return Err(Error::format(format!(
                        "line {}: bad item id `{}`",
                        line + 1,
                        &record[0]
                    )))
                }
            };
            rows.push((id, record[1].to_string()));
        }
        Self::from_rows(&rows, init)
    }

    pub fn load(path: &Path, init: EmbeddingInit) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, init)
    }

    /// CSV text with a header row, readable by [`Catalog::parse_csv`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from("item_id,category_name\n");
        for item in &self.items {
            out.push_str(&format!("{},{}\n", item.item_id, self.categories[item.category_id]));
        }
        out
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn item(&self, id: usize) -> Result<&ItemRecord> {
        self.items
            .get(id)
            .ok_or_else(|| Error::domain(format!("unknown item id {id}")))
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn category_of(&self, item_id: usize) -> usize {
        self.items[item_id].category_id
    }

    pub fn category_name(&self, id: usize) -> &str {
        &self.categories[id]
    }

    /// Case-insensitive lookup of a category id by name.
    pub fn category_id(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        self.categories.iter().position(|c| c.eq_ignore_ascii_case(name))
    }

    /// Row `i` of `W`.
    pub fn membership_row(&self, item_id: usize) -> &[u8] {
        let c = self.n_categories();
        &self.membership[item_id * c..(item_id + 1) * c]
    }

    pub fn item_embeddings(&self) -> &Tensor {
        &self.item_embeddings
    }

    pub fn embedding_dim(&self) -> usize {
        self.item_embeddings.shape()[1]
    }

    /// Number of items in each category.
    pub fn category_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_categories()];
        for item in &self.items {
            sizes[item.category_id] += 1;
        }
        sizes
    }

    /// Binary indicator over categories for the set `selected`.
    pub fn category_indicator(&self, selected: &[usize]) -> Result<Vec<u8>> {
        let mut out = vec![0u8; self.n_categories()];
        for &c in selected {
            if c >= self.n_categories() {
                return Err(Error::domain(format!(
                    "category id {c} out of range (|C| = {})",
                    self.n_categories()
                )));
            }
            out[c] = 1;
        }
        Ok(out)
    }

    /// Item mask `W · indicator(selected)`.
    pub fn category_mask(&self, selected: &[usize]) -> Result<Vec<u8>> {
        let indicator = self.category_indicator(selected)?;
        let mask = (0..self.n_items())
            .map(|i| {
                self.membership_row(i)
                    .iter()
                    .zip(&indicator)
                    .map(|(w, c)| w * c)
                    .sum()
            })
            .collect();
        Ok(mask)
    }

    /// Distinct categories of a list of items, ascending.
    pub fn categories_of_list(&self, items: &[usize]) -> Vec<usize> {
        let mut cats: Vec<usize> = items.iter().map(|&i| self.category_of(i)).collect();
        cats.sort_unstable();
        cats.dedup();
        cats
    }
}
