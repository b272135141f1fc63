use crate::error::{Error, Result};

/// Discounted return-to-go `G_t = r_t + gamma * G_{t+1}`, with `G_{T-1} = r_{T-1}`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::domain("discounted_return needs at least one reward"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!("gamma must lie in (0,1], got {gamma}")));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    Ok(out)
}
