/// Ranks `1..=n` with each block of tied values sharing the mean rank of the block.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Sizes of tie blocks with more than one member.
pub(crate) fn tie_blocks(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut blocks = Vec::new();
    let mut run = 1;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            if run > 1 {
                blocks.push(run);
            }
            run = 1;
        }
    }
    if run > 1 {
        blocks.push(run);
    }
    blocks
}

/// Σ (t³ − t) over tie blocks.
pub fn tie_correction(values: &[f64]) -> f64 {
    tie_blocks(values)
        .into_iter()
        .map(|t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum()
}

/// Midranks doubled, which are always integers.
pub(crate) fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    midranks(values)
        .into_iter()
        .map(|r| (2.0 * r).round() as u64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(midranks(&[10.0, 20.0, 30.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(midranks(&[5.0, 5.0, 8.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(midranks(&[7.0; 4]), vec![2.5; 4]);
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn ties() {
        assert_eq!(tie_blocks(&[1.0, 2.0, 2.0, 3.0, 3.0, 3.0]), vec![2, 3]);
        assert_eq!(tie_correction(&[1.0, 2.0, 2.0, 3.0, 3.0, 3.0]), 6.0 + 24.0);
        assert_eq!(tie_correction(&[1.0, 2.0]), 0.0);
    }

    proptest! {
        #[test]
        fn rank_sum_is_triangular(values in prop::collection::vec(-5i32..5, 1..40)) {
            let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            let n = v.len() as f64;
            let sum: f64 = midranks(&v).iter().sum();
            prop_assert!((sum - n * (n + 1.0) / 2.0).abs() < 1e-9);
        }

        #[test]
        fn rank_counts_values_below(values in prop::collection::vec(-5i32..5, 1..30)) {
            let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            let ranks = midranks(&v);
            for (i, &x) in v.iter().enumerate() {
                let below = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                prop_assert_eq!(ranks[i], below + (equal + 1.0) / 2.0);
            }
        }
    }
}
