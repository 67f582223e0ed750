use crate::error::{Error, Result};

/// Upper tail `P(X > x)` of a chi-square variable with `df` degrees of
/// freedom, i.e. the regularized upper incomplete gamma `Q(df/2, x/2)`.
pub fn chi_square_sf(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(Error::InvalidArgument(
            "chi-square degrees of freedom must be positive".into(),
        ));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "chi-square argument must be non-negative, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    statrs::function::gamma::checked_gamma_ur(f64::from(df) / 2.0, x / 2.0)
        .map(|p| p.clamp(0.0, 1.0))
        .map_err(|e| Error::Numeric(format!("incomplete gamma: {e}")))
}
