use super::FusionError;

/// Sample Pearson correlation coefficient.
///
/// Zero variance in either series is an error rather than NaN.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, FusionError> {
    if xs.len() != ys.len() {
        return Err(FusionError::InvalidInput(format!(
            "series lengths differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(FusionError::UndefinedCorrelation(format!(
            "need at least two pairs, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(FusionError::InvalidInput("series contain non-finite values".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(FusionError::UndefinedCorrelation("first series is constant".into()));
    }
    if syy == 0.0 {
        return Err(FusionError::UndefinedCorrelation("second series is constant".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
