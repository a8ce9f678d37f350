/// View factor from a disc of radius `r1` to a parallel coaxial disc of
/// radius `r2` at distance `h`.
pub fn analytic_view_factor_coaxial_discs(r1: f64, r2: f64, h: f64) -> f64 {
    let a = r1 / h;
    let b = r2 / h;
    let x = 1.0 + (1.0 + b * b) / (a * a);
    0.5 * (x - (x * x - 4.0 * (b / a).powi(2)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_discs_one_apart() {
        // X = 6, F = 3 - 2√2
        let f = analytic_view_factor_coaxial_discs(0.5, 0.5, 1.0);
        assert!((f - (3.0 - 8f64.sqrt())).abs() < 1e-15);
        assert!((f - 0.17157).abs() < 5e-6);
    }

    #[test]
    fn limits() {
        assert!((analytic_view_factor_coaxial_discs(0.1, 100.0, 1.0) - 1.0).abs() < 1e-3);
        let far = analytic_view_factor_coaxial_discs(0.5, 0.5, 100.0);
        assert!((far / 2.5e-5 - 1.0).abs() < 0.1);
        assert!(analytic_view_factor_coaxial_discs(0.5, 0.5, 1e-3) > 0.998);
    }
}
