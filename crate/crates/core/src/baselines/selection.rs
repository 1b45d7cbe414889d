use super::linear::RidgeRegression;
use crate::error::{ensure, Result};

const FOLDS: usize = 5;

/// RMSE of ridge regression under contiguous `FOLDS`-fold cross-validation on
/// the listed feature columns.
pub fn cross_validated_rmse(rows: &[Vec<f64>], targets: &[f64], columns: &[usize], lambda: f64) -> Result<f64> {
    let n = rows.len();
    ensure!(n >= FOLDS, Validation, "need at least {FOLDS} rows for cross-validation, got {n}");
    let select = |r: &Vec<f64>| columns.iter().map(|&c| r[c]).collect::<Vec<f64>>();
    let mut sq = 0.0;
    for fold in 0..FOLDS {
        let (lo, hi) = (fold * n / FOLDS, (fold + 1) * n / FOLDS);
        let train_rows: Vec<Vec<f64>> = (0..n).filter(|i| !(lo..hi).contains(i)).map(|i| select(&rows[i])).collect();
        let train_y: Vec<f64> = (0..n).filter(|i| !(lo..hi).contains(i)).map(|i| targets[i]).collect();
        let model = RidgeRegression::fit(&train_rows, &train_y, lambda, true)?;
        for i in lo..hi {
            sq += (model.predict(&select(&rows[i])) - targets[i]).powi(2);
        }
    }
    Ok((sq / n as f64).sqrt())
}

/// Greedy backward elimination: repeatedly drops the word whose removal gives
/// the lowest cross-validated ridge RMSE until `k_keep` remain. Ties go to the
/// lexicographically smallest word. Returns the kept words in sorted order.
///
/// `rows[i][j]` is the feature of word `words[j]` in example `i`.
pub fn backward_selection(words: &[String], rows: &[Vec<f64>], targets: &[f64], k_keep: usize, lambda: f64) -> Result<Vec<String>> {
    ensure!(k_keep > 0, Validation, "k_keep must be positive");
    ensure!(
        words.len() >= k_keep,
        Validation,
        "{} candidate words for k_keep = {k_keep}",
        words.len()
    );
    ensure!(
        rows.iter().all(|r| r.len() == words.len()),
        Shape,
        "feature rows do not match {} words",
        words.len()
    );
    let mut active: Vec<usize> = (0..words.len()).collect();
    active.sort_by(|&a, &b| words[a].cmp(&words[b]));
    while active.len() > k_keep {
        let mut best: Option<(f64, usize)> = None;
        for pos in 0..active.len() {
            let mut trial = active.clone();
            trial.remove(pos);
            let rmse = cross_validated_rmse(rows, targets, &trial, lambda)?;
            // `active` is sorted by word, so a strict improvement is needed to displace an earlier word.
            if best.is_none_or(|(b, _)| rmse < b - 1e-12 * b.abs().max(1.0)) {
                best = Some((rmse, pos));
            }
        }
        let (_, pos) = best.expect("at least one candidate");
        active.remove(pos);
    }
    Ok(active.into_iter().map(|i| words[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn words(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn recovers_planted_dependency() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..80).map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 2.0 * r[3] - 1.5 * r[7] + rng.random_range(-0.05..0.05))
            .collect();
        let got = backward_selection(&words(10), &rows, &y, 2, 1e-3).unwrap();
        assert_eq!(got, ["w3", "w7"]);
    }

    #[test]
    fn keeping_everything_is_a_no_op() {
        let rows = vec![vec![1.0, 2.0, 3.0]; 6];
        let y = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let mut got = backward_selection(&words(3), &rows, &y, 3, 1.0).unwrap();
        got.sort();
        assert_eq!(got, words(3));
    }

    #[test]
    fn invalid_k() {
        let rows = vec![vec![1.0]; 6];
        let y = vec![0.0; 6];
        assert!(backward_selection(&words(1), &rows, &y, 0, 1.0).is_err());
        assert!(backward_selection(&words(1), &rows, &y, 2, 1.0).is_err());
    }
}
