//! Closed-form head-loss model for a two-segment pipe with a sudden
//! expansion.
//!
//! Distributed losses follow the Hazen-Williams slope, the expansion loss
//! follows Borda-Carnot, and the whole drop reduces to the two-coefficient
//! form `dp = lambda1 * q^2 + lambda2 * q^lambda3`. These functions generate
//! every training set in the crate and serve as the independent reference
//! for every accuracy claim, so they are kept free of any network code.
//!
//! All functions are pure; [`PipeParams`] is immutable once built and can be
//! shared across threads.

use std::f64::consts::PI;
use thiserror::Error;

/// Hazen-Williams coefficient.
pub const HW_LAMBDA: f64 = 10.67;
/// Hazen-Williams flow exponent.
pub const HW_ALPHA: f64 = 1.8520;
/// Hazen-Williams diameter exponent.
pub const HW_BETA: f64 = -4.8704;

#[derive(Debug, Error)]
pub enum HydraulicsError {
    #[error("{name} must be strictly positive, found {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, found {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("expansion only: sigma2 ({sigma2}) must be >= sigma1 ({sigma1})")]
    Contraction { sigma1: f64, sigma2: f64 },
    #[error("pressure drop {name} must be strictly positive, found {value} (fractional-power domain)")]
    NonPositiveDrop { name: &'static str, value: f64 },
}

/// Geometry and physical constants of the two-segment pipe.
///
/// Areas in m^2, lengths in m, `g` in m/s^2, `nu` (kinematic viscosity,
/// laminar Darcy only) in m^2/s; roughness and the eddy coefficient are
/// dimensionless. The density value 1.0 is used throughout as tabulated for
/// the fixed-geometry problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeParams {
    pub sigma1: f64,
    pub sigma2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub rho: f64,
    pub g: f64,
    pub xi: f64,
    pub nu: f64,
}

impl PipeParams {
    /// Fixed-geometry prediction problem: expansion from 1 to 2 m^2, both
    /// segments 10 m long with roughness 140.
    pub fn fixed_geometry() -> Self {
        Self {
            sigma1: 1.0,
            sigma2: 2.0,
            kappa1: 140.0,
            kappa2: 140.0,
            delta1: 10.0,
            delta2: 10.0,
            rho: 1.0,
            g: 9.81,
            xi: 1.0,
            nu: 1.0e-6,
        }
    }

    /// Geometry-dependent problem: uniform unit cross-section, no eddy
    /// loss, distinct roughness per segment, per-record lengths.
    pub fn uniform_section() -> Self {
        Self {
            sigma1: 1.0,
            sigma2: 1.0,
            kappa1: 140.0,
            kappa2: 100.0,
            xi: 0.0,
            ..Self::fixed_geometry()
        }
    }

    pub fn with_lengths(mut self, delta1: f64, delta2: f64) -> Self {
        self.delta1 = delta1;
        self.delta2 = delta2;
        self
    }

    pub fn with_roughness(mut self, kappa1: f64, kappa2: f64) -> Self {
        self.kappa1 = kappa1;
        self.kappa2 = kappa2;
        self
    }

    /// Specific weight, `rho * g`.
    pub fn gamma(&self) -> f64 {
        self.rho * self.g
    }

    pub fn validate(&self) -> Result<(), HydraulicsError> {
        for (name, value) in [
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("g", self.g),
        ] {
            if value <= 0.0 {
                return Err(HydraulicsError::NonPositive { name, value });
            }
        }
        for (name, value) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if value < 0.0 {
                return Err(HydraulicsError::Negative { name, value });
            }
        }
        if self.xi < 0.0 {
            return Err(HydraulicsError::Negative { name: "xi", value: self.xi });
        }
        Ok(())
    }
}

/// Pressure drops (Pa) over segment 1, the expansion, and segment 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentDrops {
    pub dp1: f64,
    pub dpe: f64,
    pub dp2: f64,
}

impl SegmentDrops {
    pub fn total(&self) -> f64 {
        self.dp1 + self.dpe + self.dp2
    }
}

/// Reduced coefficients of the aggregate drop
/// `dp = lambda1 * q^2 + lambda2 * q^lambda3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaCoefficients {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

/// Hydraulic diameter of a circular section of area `sigma`:
/// `phi = sqrt(4 sigma / pi)`.
pub fn hydraulic_diameter(sigma: f64) -> Result<f64, HydraulicsError> {
    if sigma <= 0.0 {
        return Err(HydraulicsError::NonPositive { name: "sigma", value: sigma });
    }
    Ok((4.0 * sigma / PI).sqrt())
}

/// Hazen-Williams head slope `i = HW_LAMBDA * (q / kappa)^HW_ALPHA * phi^HW_BETA`
/// (head per unit length).
pub fn hazen_williams_slope(q: f64, kappa: f64, phi: f64) -> Result<f64, HydraulicsError> {
    if q <= 0.0 {
        return Err(HydraulicsError::NonPositive { name: "q", value: q });
    }
    if kappa <= 0.0 {
        return Err(HydraulicsError::NonPositive { name: "kappa", value: kappa });
    }
    if phi <= 0.0 {
        return Err(HydraulicsError::NonPositive { name: "phi", value: phi });
    }
    Ok(HW_LAMBDA * (q / kappa).powf(HW_ALPHA) * phi.powf(HW_BETA))
}

/// Darcy-Weisbach head slope `i = f_d * v^2 / (2 g phi)`.
pub fn darcy_weisbach_slope(v: f64, f_d: f64, phi: f64, g: f64) -> Result<f64, HydraulicsError> {
    if v < 0.0 {
        return Err(HydraulicsError::Negative { name: "v", value: v });
    }
    if phi <= 0.0 {
        return Err(HydraulicsError::NonPositive { name: "phi", value: phi });
    }
    if g <= 0.0 {
        return Err(HydraulicsError::NonPositive { name: "g", value: g });
    }
    Ok(f_d * v * v / (2.0 * g * phi))
}

/// Laminar friction factor `64 nu / (v phi)`; substituted into the
/// Darcy-Weisbach slope it makes the slope linear in `v`.
pub fn laminar_friction_factor(v: f64, nu: f64, phi: f64) -> Result<f64, HydraulicsError> {
    if v <= 0.0 {
        return Err(HydraulicsError::NonPositive { name: "v", value: v });
    }
    if phi <= 0.0 {
        return Err(HydraulicsError::NonPositive { name: "phi", value: phi });
    }
    Ok(64.0 * nu / (v * phi))
}

/// Borda-Carnot head loss (m) at a sudden expansion:
/// `xi / (2g) * (1 - sigma1/sigma2)^2 * v1^2`.
pub fn borda_carnot_head_loss(
    v1: f64,
    sigma1: f64,
    sigma2: f64,
    xi: f64,
    g: f64,
) -> Result<f64, HydraulicsError> {
    if sigma1 <= 0.0 {
        return Err(HydraulicsError::NonPositive { name: "sigma1", value: sigma1 });
    }
    if sigma2 < sigma1 {
        return Err(HydraulicsError::Contraction { sigma1, sigma2 });
    }
    if v1 < 0.0 {
        return Err(HydraulicsError::Negative { name: "v1", value: v1 });
    }
    let ratio = 1.0 - sigma1 / sigma2;
    Ok(xi / (2.0 * g) * ratio * ratio * v1 * v1)
}

/// Per-segment pressure drops for flow `q`:
///
/// - `dp1 = HW_LAMBDA * gamma * (q/kappa1)^alpha * phi1^beta * delta1`
/// - `dpe = rho/2 * q^2 * [(1/sigma2^2 - 1/sigma1^2) + xi (1/sigma1 - 1/sigma2)^2]`
/// - `dp2` analogous to `dp1` with segment-2 values
pub fn segment_pressure_drops(q: f64, params: &PipeParams) -> Result<SegmentDrops, HydraulicsError> {
    params.validate()?;
    if q <= 0.0 {
        return Err(HydraulicsError::NonPositive { name: "q", value: q });
    }
    let gamma = params.gamma();
    let phi1 = hydraulic_diameter(params.sigma1)?;
    let phi2 = hydraulic_diameter(params.sigma2)?;
    let dp1 = gamma * hazen_williams_slope(q, params.kappa1, phi1)? * params.delta1;
    let dp2 = gamma * hazen_williams_slope(q, params.kappa2, phi2)? * params.delta2;
    let dpe = expansion_pressure_drop(q, params);
    Ok(SegmentDrops { dp1, dpe, dp2 })
}

fn expansion_pressure_drop(q: f64, params: &PipeParams) -> f64 {
    let inv1 = 1.0 / params.sigma1;
    let inv2 = 1.0 / params.sigma2;
    let bracket = (inv2 * inv2 - inv1 * inv1) + params.xi * (inv1 - inv2) * (inv1 - inv2);
    0.5 * params.rho * q * q * bracket
}

/// Reduced coefficients of the aggregate drop. `lambda1` carries the
/// expansion bracket, `lambda2` the distributed Hazen-Williams losses with
/// the hydraulic diameters substituted, and `lambda3 = HW_ALPHA`.
///
/// `lambda2` is derived exactly from the per-segment form, i.e.
/// `gamma * HW_LAMBDA * sum_i phi_i^beta * kappa_i^-alpha * delta_i`, so
/// that the aggregate and per-segment routes agree to rounding error.
pub fn lambda_coefficients(params: &PipeParams) -> Result<LambdaCoefficients, HydraulicsError> {
    params.validate()?;
    let inv1 = 1.0 / params.sigma1;
    let inv2 = 1.0 / params.sigma2;
    let lambda1 =
        0.5 * params.rho * ((inv2 * inv2 - inv1 * inv1) + params.xi * (inv1 - inv2) * (inv1 - inv2));
    let gamma = params.gamma();
    let phi1 = hydraulic_diameter(params.sigma1)?;
    let phi2 = hydraulic_diameter(params.sigma2)?;
    let lambda2 = gamma
        * HW_LAMBDA
        * (phi1.powf(HW_BETA) * params.kappa1.powf(-HW_ALPHA) * params.delta1
            + phi2.powf(HW_BETA) * params.kappa2.powf(-HW_ALPHA) * params.delta2);
    Ok(LambdaCoefficients { lambda1, lambda2, lambda3: HW_ALPHA })
}

/// Aggregate pressure drop `lambda1 * q^2 + lambda2 * q^lambda3`.
pub fn total_pressure_drop(q: f64, params: &PipeParams) -> Result<f64, HydraulicsError> {
    if q <= 0.0 {
        return Err(HydraulicsError::NonPositive { name: "q", value: q });
    }
    let lam = lambda_coefficients(params)?;
    Ok(lam.lambda1 * q * q + lam.lambda2 * q.powf(lam.lambda3))
}

/// Inverts the distributed-loss model: given measured pressures
/// `p0 > p1 > p2` at flow `q`, recovers the per-segment roughness
///
/// `kappa_i = (gamma * HW_LAMBDA * phi_i^beta * delta_i)^(1/alpha)
///            * q * (p_{i-1} - p_i)^(-1/alpha)`.
pub fn roughness_from_observation(
    q: f64,
    p0: f64,
    p1: f64,
    p2: f64,
    params: &PipeParams,
) -> Result<(f64, f64), HydraulicsError> {
    params.validate()?;
    if q <= 0.0 {
        return Err(HydraulicsError::NonPositive { name: "q", value: q });
    }
    let drop1 = p0 - p1;
    let drop2 = p1 - p2;
    if drop1 <= 0.0 {
        return Err(HydraulicsError::NonPositiveDrop { name: "p0 - p1", value: drop1 });
    }
    if drop2 <= 0.0 {
        return Err(HydraulicsError::NonPositiveDrop { name: "p1 - p2", value: drop2 });
    }
    let gamma = params.gamma();
    let inv_alpha = 1.0 / HW_ALPHA;
    let phi1 = hydraulic_diameter(params.sigma1)?;
    let phi2 = hydraulic_diameter(params.sigma2)?;
    let kappa1 = (gamma * HW_LAMBDA * phi1.powf(HW_BETA) * params.delta1).powf(inv_alpha)
        * q
        * drop1.powf(-inv_alpha);
    let kappa2 = (gamma * HW_LAMBDA * phi2.powf(HW_BETA) * params.delta2).powf(inv_alpha)
        * q
        * drop2.powf(-inv_alpha);
    Ok((kappa1, kappa2))
}

/// One pinned reference value for the golden file.
#[derive(Debug, Clone)]
pub struct GoldenRecord {
    /// `op(arg=..,..)` label, stable across regenerations.
    pub label: String,
    pub value: f64,
}

/// The pinned evaluations persisted in the golden file. Labels are stable;
/// adding records is fine, renaming them is a format change.
pub fn golden_records() -> Vec<GoldenRecord> {
    let table1 = PipeParams::fixed_geometry();
    let rec = |label: &str, value: f64| GoldenRecord { label: label.to_string(), value };
    let drops_q2 = segment_pressure_drops(2.0, &table1).expect("valid");
    let lam = lambda_coefficients(&table1).expect("valid");
    vec![
        rec("hydraulic_diameter(sigma=1)", hydraulic_diameter(1.0).unwrap()),
        rec("hydraulic_diameter(sigma=2)", hydraulic_diameter(2.0).unwrap()),
        rec(
            "hazen_williams_slope(q=1,kappa=140,sigma=1)",
            hazen_williams_slope(1.0, 140.0, hydraulic_diameter(1.0).unwrap()).unwrap(),
        ),
        rec(
            "darcy_weisbach_slope(v=2,f_d=0.02,phi=1,g=9.81)",
            darcy_weisbach_slope(2.0, 0.02, 1.0, 9.81).unwrap(),
        ),
        rec(
            "borda_carnot_head_loss(v1=2,sigma1=1,sigma2=2,xi=1,g=9.81)",
            borda_carnot_head_loss(2.0, 1.0, 2.0, 1.0, 9.81).unwrap(),
        ),
        rec("segment_pressure_drops(q=2,table1).dp1", drops_q2.dp1),
        rec("segment_pressure_drops(q=2,table1).dpe", drops_q2.dpe),
        rec("segment_pressure_drops(q=2,table1).dp2", drops_q2.dp2),
        rec("lambda_coefficients(table1).lambda1", lam.lambda1),
        rec("lambda_coefficients(table1).lambda2", lam.lambda2),
        rec("lambda_coefficients(table1).lambda3", lam.lambda3),
        rec(
            "total_pressure_drop(q=3,table1)",
            total_pressure_drop(3.0, &table1).unwrap(),
        ),
    ]
}

/// Serializes golden records, one `label value` line with 15 significant
/// digits, the payload of the `regen-golden` maintenance command.
pub fn golden_file_contents() -> String {
    let mut out =
        String::from("# pipe-hydraulics golden values v1\n# label value(15 significant digits)\n");
    for rec in golden_records() {
        out.push_str(&format!("{} {:.14e}\n", rec.label, rec.value));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn hydraulic_diameter_inverts_circle_area() {
        // sigma = pi/4 corresponds to unit diameter.
        assert!((hydraulic_diameter(PI / 4.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(rel_err(hydraulic_diameter(1.0).unwrap(), 2.0 / PI.sqrt()) < 1e-15);
        assert!(rel_err(hydraulic_diameter(2.0).unwrap(), (8.0 / PI).sqrt()) < 1e-15);
        assert!(hydraulic_diameter(0.0).is_err());
        assert!(hydraulic_diameter(-1.0).is_err());
    }

    #[test]
    fn hazen_williams_unit_arguments_give_lambda() {
        // q = kappa and phi = 1 collapse both power terms.
        let i = hazen_williams_slope(140.0, 140.0, 1.0).unwrap();
        assert!(rel_err(i, HW_LAMBDA) < 1e-15, "i = {i}");
    }

    #[test]
    fn hazen_williams_power_law_scaling() {
        let i1 = hazen_williams_slope(1.3, 120.0, 1.1).unwrap();
        let i2 = hazen_williams_slope(2.6, 120.0, 1.1).unwrap();
        assert!(rel_err(i2 / i1, 2.0f64.powf(HW_ALPHA)) < 1e-12);
    }

    #[test]
    fn hazen_williams_rejects_non_positive_flow() {
        assert!(hazen_williams_slope(0.0, 140.0, 1.0).is_err());
        assert!(hazen_williams_slope(-2.0, 140.0, 1.0).is_err());
    }

    #[test]
    fn darcy_weisbach_cases() {
        assert_eq!(darcy_weisbach_slope(0.0, 0.02, 1.0, 9.81).unwrap(), 0.0);
        let i = darcy_weisbach_slope(2.0, 0.02, 1.0, 9.81).unwrap();
        assert!(rel_err(i, 0.02 * 4.0 / 19.62) < 1e-15);
    }

    #[test]
    fn laminar_factor_makes_slope_linear_in_velocity() {
        let nu = 1.0e-6;
        let phi = 1.0;
        let slope_at = |v: f64| {
            let f_d = laminar_friction_factor(v, nu, phi).unwrap();
            darcy_weisbach_slope(v, f_d, phi, 9.81).unwrap()
        };
        let (i1, i2) = (slope_at(1.5), slope_at(3.0));
        assert!(rel_err(i2, 2.0 * i1) < 1e-12, "slope not linear: {i1} vs {i2}");
    }

    #[test]
    fn borda_carnot_cases() {
        // No expansion means no loss, regardless of velocity.
        assert_eq!(borda_carnot_head_loss(3.0, 1.5, 1.5, 1.0, 9.81).unwrap(), 0.0);
        // xi = 0 switches the loss off entirely.
        assert_eq!(borda_carnot_head_loss(7.0, 1.0, 2.0, 0.0, 9.81).unwrap(), 0.0);
        let dh = borda_carnot_head_loss(2.0, 1.0, 2.0, 1.0, 9.81).unwrap();
        assert!(rel_err(dh, 0.25 * 4.0 / 19.62) < 1e-15);
        assert!(matches!(
            borda_carnot_head_loss(2.0, 2.0, 1.0, 1.0, 9.81),
            Err(HydraulicsError::Contraction { .. })
        ));
    }

    #[test]
    fn expansion_term_vanishes_for_uniform_section_without_eddies() {
        let params = PipeParams::uniform_section();
        let drops = segment_pressure_drops(1.7, &params).unwrap();
        assert_eq!(drops.dpe, 0.0);
    }

    #[test]
    fn segment_drops_match_head_loss_route() {
        // Distributed drops equal gamma times the integrated head slope,
        // an independent path through the slope function.
        let params = PipeParams::fixed_geometry();
        let q = 2.0;
        let drops = segment_pressure_drops(q, &params).unwrap();
        let phi1 = hydraulic_diameter(params.sigma1).unwrap();
        let phi2 = hydraulic_diameter(params.sigma2).unwrap();
        let dp1 =
            params.gamma() * hazen_williams_slope(q, params.kappa1, phi1).unwrap() * params.delta1;
        let dp2 =
            params.gamma() * hazen_williams_slope(q, params.kappa2, phi2).unwrap() * params.delta2;
        assert!(rel_err(drops.dp1, dp1) < 1e-15);
        assert!(rel_err(drops.dp2, dp2) < 1e-15);
        // Expansion drop equals gamma times the Borda-Carnot head loss plus
        // the kinetic pressure recovery term.
        let v1 = q / params.sigma1;
        let v2 = q / params.sigma2;
        let eddy = params.gamma()
            * borda_carnot_head_loss(v1, params.sigma1, params.sigma2, params.xi, params.g).unwrap();
        let recovery = 0.5 * params.rho * (v2 * v2 - v1 * v1);
        assert!(rel_err(drops.dpe, eddy + recovery) < 1e-12);
    }

    #[test]
    fn lambda1_for_fixed_geometry_is_minus_quarter() {
        let lam = lambda_coefficients(&PipeParams::fixed_geometry()).unwrap();
        assert!((lam.lambda1 + 0.25).abs() < 1e-15, "lambda1 = {}", lam.lambda1);
        assert_eq!(lam.lambda3, HW_ALPHA);
    }

    #[test]
    fn lambda2_matches_per_segment_slope_sum() {
        // Independent route: lambda2 = sum_i gamma * i_i(q=1) * delta_i.
        let params = PipeParams::fixed_geometry();
        let lam = lambda_coefficients(&params).unwrap();
        let phi1 = hydraulic_diameter(params.sigma1).unwrap();
        let phi2 = hydraulic_diameter(params.sigma2).unwrap();
        let want = params.gamma()
            * (hazen_williams_slope(1.0, params.kappa1, phi1).unwrap() * params.delta1
                + hazen_williams_slope(1.0, params.kappa2, phi2).unwrap() * params.delta2);
        assert!(rel_err(lam.lambda2, want) < 1e-14, "lambda2 = {}", lam.lambda2);
    }

    #[test]
    fn total_equals_segment_sum_over_random_flows() {
        let params = PipeParams::fixed_geometry();
        // Deterministic pseudo-random sweep of 100 flows in [1, 5].
        for k in 0..100 {
            let q = 1.0 + 4.0 * ((k as f64 * 0.61803398875) % 1.0);
            let total = total_pressure_drop(q, &params).unwrap();
            let drops = segment_pressure_drops(q, &params).unwrap();
            assert!(
                rel_err(total, drops.total()) < 1e-12,
                "q = {q}: {total} vs {}",
                drops.total()
            );
        }
    }

    #[test]
    fn total_at_unit_flow_is_lambda_sum() {
        let params = PipeParams::fixed_geometry();
        let lam = lambda_coefficients(&params).unwrap();
        let total = total_pressure_drop(1.0, &params).unwrap();
        assert_eq!(total, lam.lambda1 + lam.lambda2);
    }

    #[test]
    fn total_vanishes_as_flow_goes_to_zero() {
        let params = PipeParams::fixed_geometry();
        let total = total_pressure_drop(1e-12, &params).unwrap();
        assert!(total.abs() < 1e-12, "total = {total}");
    }

    #[test]
    fn roughness_round_trip_recovers_known_values() {
        let params = PipeParams::uniform_section(); // kappa = (140, 100), xi = 0
        let q = 3.0;
        let drops = segment_pressure_drops(q, &params).unwrap();
        let p0 = 10.0;
        let p1 = p0 - drops.dp1;
        let p2 = p1 - drops.dp2;
        let (k1, k2) = roughness_from_observation(q, p0, p1, p2, &params).unwrap();
        assert!(rel_err(k1, 140.0) < 1e-9, "kappa1 = {k1}");
        assert!(rel_err(k2, 100.0) < 1e-9, "kappa2 = {k2}");
    }

    #[test]
    fn roughness_scales_linearly_with_flow_at_fixed_pressures() {
        let params = PipeParams::uniform_section();
        let (p0, p1, p2) = (10.0, 9.0, 8.5);
        let (k1a, k2a) = roughness_from_observation(1.5, p0, p1, p2, &params).unwrap();
        let (k1b, k2b) = roughness_from_observation(3.0, p0, p1, p2, &params).unwrap();
        assert!(rel_err(k1b, 2.0 * k1a) < 1e-12);
        assert!(rel_err(k2b, 2.0 * k2a) < 1e-12);
    }

    #[test]
    fn kappa1_ignores_downstream_pressure() {
        let params = PipeParams::uniform_section();
        let (k1a, _) = roughness_from_observation(2.0, 10.0, 9.0, 8.0, &params).unwrap();
        let (k1b, _) = roughness_from_observation(2.0, 10.0, 9.0, 5.0, &params).unwrap();
        assert_eq!(k1a, k1b);
    }

    #[test]
    fn roughness_rejects_non_positive_drops() {
        let params = PipeParams::uniform_section();
        assert!(matches!(
            roughness_from_observation(2.0, 9.0, 9.0, 8.0, &params),
            Err(HydraulicsError::NonPositiveDrop { .. })
        ));
        assert!(matches!(
            roughness_from_observation(2.0, 10.0, 9.0, 9.5, &params),
            Err(HydraulicsError::NonPositiveDrop { .. })
        ));
    }

    #[test]
    fn golden_records_stay_parseable() {
        let text = golden_file_contents();
        let mut n = 0;
        for line in text.lines().filter(|l| !l.starts_with('#')) {
            let (label, value) = line.rsplit_once(' ').expect("label and value");
            assert!(!label.is_empty());
            value.parse::<f64>().expect("parseable value");
            n += 1;
        }
        assert_eq!(n, golden_records().len());
    }
}
