use crate::problem::SimplexWeights;

/// Euclidean projection onto the probability simplex (sort, then shift by a common threshold).
pub fn project_simplex(v: &[f64]) -> SimplexWeights {
    SimplexWeights::from_raw(project_simplex_raw(v))
}

pub(crate) fn project_simplex_raw(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project onto an empty simplex");
    if v.len() == 1 {
        return vec![1.0];
    }
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j as f64 + 1.0);
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}
