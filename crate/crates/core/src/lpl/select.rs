use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Scores of every item and the chosen list.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// `<p, i_j> * mask_j` for every item, as logged.
    pub scores: Vec<f64>,
    pub items: Vec<usize>,
}

/// Dot-product scoring against every item embedding; the list is the top
/// `k` eligible items, ties going to the lower id. Masked items are never
/// selected, even when their logged score of 0 beats an eligible one.
pub fn score_and_select(p: &[f64], embeddings: &Tensor, mask: &[u8], k: usize) -> Result<Selection> {
    let (n, d) = embeddings.dims2()?;
    if p.len() != d {
        return Err(Error::domain(format!("virtual item has width {}, embeddings {d}", p.len())));
    }
    if mask.len() != n {
        return Err(Error::domain(format!("mask has {} entries for {n} items", mask.len())));
    }
    if k == 0 {
        return Err(Error::domain("list length must be >= 1"));
    }
    let eligible = mask.iter().filter(|m| **m != 0).count();
    if eligible < k {
        return Err(Error::InfeasibleMask { eligible, k });
    }
    let sim: Vec<f64> = (0..n)
        .map(|j| embeddings.row_slice(j).iter().zip(p).map(|(a, b)| a * b).sum())
        .collect();
    let mut candidates: Vec<usize> = (0..n).filter(|&j| mask[j] != 0).collect();
    // partial_cmp so that -0.0 and 0.0 tie
    candidates.sort_by(|&a, &b| {
        sim[b]
            .partial_cmp(&sim[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    candidates.truncate(k);
    let scores = sim.iter().zip(mask).map(|(s, m)| s * f64::from(*m)).collect();
    Ok(Selection {
        scores,
        items: candidates,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn emb() -> Tensor {
        Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0]).unwrap()
    }

    #[test]
    fn picks_best_dot_product() {
        let s = score_and_select(&[1.0, 0.0], &emb(), &[1, 1, 1], 1).unwrap();
        assert_eq!(s.items, vec![0]);
    }

    #[test]
    fn masked_item_excluded_despite_literal_tie() {
        let s = score_and_select(&[1.0, 0.0], &emb(), &[0, 1, 1], 1).unwrap();
        assert_eq!(s.items, vec![1]);
        assert_eq!(s.scores, vec![0.0, 0.0, -1.0]);
    }

    #[test]
    fn full_list_sorted() {
        let s = score_and_select(&[1.0, 0.5], &emb(), &[1, 1, 1], 3).unwrap();
        assert_eq!(s.items, vec![0, 1, 2]);
    }

    #[test]
    fn infeasible_mask() {
        assert!(matches!(
            score_and_select(&[1.0, 0.0], &emb(), &[0, 0, 1], 2),
            Err(Error::InfeasibleMask { eligible: 1, k: 2 })
        ));
    }

    /// Reference: exhaustive ranking of eligible items.
    fn oracle(p: &[f64], rows: &[Vec<f64>], mask: &[u8], k: usize) -> Vec<usize> {
        let mut v: Vec<(f64, usize)> = rows
            .iter()
            .enumerate()
            .filter(|(j, _)| mask[*j] == 1)
            .map(|(j, r)| (r.iter().zip(p).map(|(a, b)| a * b).sum(), j))
            .collect();
        v.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        v.into_iter().take(k).map(|(_, j)| j).collect()
    }

    proptest! {
        #[test]
        fn matches_oracle(
            n in 1usize..30,
            d in 1usize..5,
            seed in any::<u64>(),
        ) {
            let mut rng = crate::numeric::RngStream::new(seed, 0);
            // coarse grid so ties are common
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.index(5) as f64 - 2.0).collect()).collect();
            let p: Vec<f64> = (0..d).map(|_| rng.index(5) as f64 - 2.0).collect();
            let mask: Vec<u8> = (0..n).map(|_| u8::from(rng.bernoulli(0.6))).collect();
            let eligible = mask.iter().filter(|m| **m == 1).count();
            prop_assume!(eligible >= 1);
            let k = 1 + rng.index(eligible);
            let e = Tensor::matrix(n, d, rows.concat()).unwrap();
            let s = score_and_select(&p, &e, &mask, k).unwrap();
            prop_assert_eq!(&s.items, &oracle(&p, &rows, &mask, k));
            prop_assert!(s.items.iter().all(|&j| mask[j] == 1));
        }
    }
}
