//! Turns a policy output into integer server counts per MSB.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{RegionTopology, TypeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConverterParams {
    /// Softmax temperature.
    pub zeta: f64,
    /// Base of the over-provision factor.
    pub omega: f64,
    /// Clamp range for the over-provision logit.
    pub action_min: f64,
    pub action_max: f64,
    /// On the softmax path, fractions below this share of the largest one
    /// are dropped and the rest renormalized. Zero disables it.
    pub sparsify_ratio: f64,
}

impl Default for ConverterParams {
    fn default() -> Self {
        ConverterParams {
            zeta: 1.0,
            omega: std::f64::consts::E,
            action_min: -3.0,
            action_max: 0.0,
            sparsify_ratio: 0.1,
        }
    }
}

impl ConverterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::Config("converter.zeta must be finite and >= 0".into()));
        }
        if !(self.omega > 1.0 && self.omega.is_finite()) {
            return Err(Error::Config("converter.omega must be finite and > 1".into()));
        }
        if !(self.action_min.is_finite() && self.action_max.is_finite())
            || self.action_min > self.action_max
        {
            return Err(Error::Config(
                "converter.action_min must not exceed converter.action_max".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.sparsify_ratio) {
            return Err(Error::Config("converter.sparsify_ratio must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Integer server counts per MSB for one (reservation, type).
#[derive(Debug, Clone, PartialEq)]
pub struct MsbRequestVector {
    pub n: Vec<u32>,
    pub z: f64,
    /// RRU targeted per MSB.
    pub y: Vec<f64>,
}

impl MsbRequestVector {
    pub fn zeros(num_msbs: usize) -> Self {
        MsbRequestVector {
            n: vec![0; num_msbs],
            z: 0.0,
            y: vec![0.0; num_msbs],
        }
    }

    pub fn total(&self) -> u64 {
        self.n.iter().map(|&n| n as u64).sum()
    }
}

/// Temperature softmax with max subtraction.
pub fn softmax_fractions(a: &[f64], zeta: f64) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = a.iter().map(|&v| (zeta * (v - max)).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}

/// `ω^clamp(a_last)`.
pub fn over_provision(a_last: f64, params: &ConverterParams) -> f64 {
    params
        .omega
        .powf(a_last.clamp(params.action_min, params.action_max))
}

/// Zeroes fractions below `ratio` times the largest and renormalizes.
pub fn sparsify(fractions: &[f64], ratio: f64) -> Vec<f64> {
    if ratio <= 0.0 || fractions.is_empty() {
        return fractions.to_vec();
    }
    let max = fractions.iter().copied().fold(0.0, f64::max);
    let cut = ratio * max;
    let kept: Vec<f64> = fractions
        .iter()
        .map(|&f| if f >= cut { f } else { 0.0 })
        .collect();
    let sum: f64 = kept.iter().sum();
    kept.into_iter().map(|f| f / sum).collect()
}

/// Targets `y_f = fraction_f (1+z) C` and rounds each up to whole servers of
/// the type's mean RRU.
pub fn to_server_counts(
    fractions: &[f64],
    z: f64,
    demand: u64,
    type_id: TypeId,
    topo: &RegionTopology,
) -> MsbRequestVector {
    let f_n = fractions.len();
    if demand == 0 || topo.type_servers(type_id).is_empty() {
        let mut out = MsbRequestVector::zeros(f_n);
        out.z = z;
        return out;
    }
    let mean = topo.type_mean_rru(type_id);
    let scale = (1.0 + z) * demand as f64;
    let y: Vec<f64> = fractions.iter().map(|&f| f * scale).collect();
    let n = y
        .iter()
        .map(|&v| (v / mean - 1e-9).ceil().max(0.0) as u32)
        .collect();
    MsbRequestVector { n, z, y }
}

/// The softmax path: `raw` holds F MSB logits followed by the
/// over-provision logit.
pub fn convert(
    raw: &[f64],
    demand: u64,
    type_id: TypeId,
    topo: &RegionTopology,
    params: &ConverterParams,
) -> Result<MsbRequestVector> {
    let f_n = topo.num_msbs();
    if raw.len() != f_n + 1 {
        return Err(Error::Contract(format!(
            "raw action has length {} but {} was expected",
            raw.len(),
            f_n + 1
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("raw action has a non-finite entry".into()));
    }
    let fractions = sparsify(&softmax_fractions(&raw[..f_n], params.zeta), params.sparsify_ratio);
    let z = over_provision(raw[f_n], params);
    Ok(to_server_counts(&fractions, z, demand, type_id, topo))
}

/// The direct path used by the baselines: fractions and z as given.
pub fn convert_direct(
    fractions: &[f64],
    z: f64,
    demand: u64,
    type_id: TypeId,
    topo: &RegionTopology,
) -> Result<MsbRequestVector> {
    if fractions.len() != topo.num_msbs() {
        return Err(Error::Contract(format!(
            "{} fractions for {} MSBs",
            fractions.len(),
            topo.num_msbs()
        )));
    }
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || !(z.is_finite() && z >= 0.0) {
        return Err(Error::Contract("direct fractions and z must be finite and >= 0".into()));
    }
    Ok(to_server_counts(fractions, z, demand, type_id, topo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::topology::build_region;
    use proptest::prelude::*;

    fn topo() -> RegionTopology {
        build_region(&ExperimentConfig::reference().region_config()).unwrap()
    }

    #[test]
    fn softmax_cases() {
        let u = softmax_fractions(&[3.0, -1.0, 0.5], 0.0);
        assert!(u.iter().all(|f| (f - 1.0 / 3.0).abs() < 1e-15));
        let u = softmax_fractions(&[0.0; 4], 7.0);
        assert!(u.iter().all(|f| (f - 0.25).abs() < 1e-15));
        let e = std::f64::consts::E;
        let s = softmax_fractions(&[1.0, 0.0, 0.0], 1.0);
        assert!((s[0] - e / (e + 2.0)).abs() < 1e-12);
        assert!((s[1] - 1.0 / (e + 2.0)).abs() < 1e-12);
        assert!((s[0] - 0.5761).abs() < 1e-4 && (s[2] - 0.2119).abs() < 1e-4);
        let big = softmax_fractions(&[1000.0, 999.0], 1.0);
        assert!(big.iter().all(|f| f.is_finite()));
    }

    #[test]
    fn over_provision_cases() {
        let p = ConverterParams::default();
        assert_eq!(over_provision(0.0, &p), 1.0);
        assert!((over_provision(-3.0, &p) - 0.049787).abs() < 1e-6);
        assert_eq!(over_provision(-10.0, &p), over_provision(-3.0, &p));
        assert!(over_provision(-2.0, &p) > over_provision(-2.5, &p));
    }

    #[test]
    fn server_count_cases() {
        let t = topo();
        let uniform = vec![1.0 / 15.0; 15];
        assert_eq!(to_server_counts(&uniform, 0.5, 0, 0, &t).n, vec![0; 15]);
        let mut one = vec![0.0; 15];
        one[0] = 1.0;
        assert_eq!(to_server_counts(&one, 0.0, 600, 0, &t).n[0], 4);
        let r = to_server_counts(&uniform, 1.0 / 14.0, 1500, 0, &t);
        assert!((r.y[0] - 1500.0 * (15.0 / 14.0) / 15.0).abs() < 1e-9);
        assert_eq!(r.n, vec![1; 15]);
    }

    #[test]
    fn sparsify_drops_small_shares() {
        let s = sparsify(&[0.5, 0.45, 0.04, 0.01], 0.1);
        assert_eq!(s[2], 0.0);
        assert_eq!(s[3], 0.0);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(sparsify(&[0.5, 0.5], 0.0), vec![0.5, 0.5]);
    }

    #[test]
    fn validation() {
        assert!(ConverterParams::default().validate().is_ok());
        let bad = ConverterParams { omega: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ConverterParams { zeta: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn wrong_length_is_contract_error() {
        let t = topo();
        let err = convert(&[0.0; 3], 10, 0, &t, &ConverterParams::default()).unwrap_err();
        assert_eq!(err.kind(), "contract");
    }

    proptest! {
        #[test]
        fn permutation_equivariance(a in prop::collection::vec(-5.0f64..5.0, 2..16), zeta in 0.0f64..4.0, rot in 0usize..16) {
            let rot = rot % a.len();
            let mut b = a.clone();
            b.rotate_left(rot);
            let fa = softmax_fractions(&a, zeta);
            let mut fb_expected = fa.clone();
            fb_expected.rotate_left(rot);
            let fb = softmax_fractions(&b, zeta);
            for (x, y) in fb.iter().zip(&fb_expected) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn large_zeta_tends_to_one_hot(a in prop::collection::vec(-1.0f64..1.0, 2..10)) {
            let arg = a.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
            let gap = a.iter().enumerate().filter(|(i, _)| *i != arg).map(|(_, v)| a[arg] - v).fold(f64::INFINITY, f64::min);
            prop_assume!(gap > 1e-3);
            let f = softmax_fractions(&a, 1e5);
            prop_assert!(f[arg] > 1.0 - 1e-6);
        }
    }
}
