//! SWIPT physical layer: power splitting, linear energy harvesting and the
//! packet-success curves of the control and sensing links.
//!
//! The theory modules only need the success curves to be monotone and
//! continuous, so curves sit behind the [`SuccessCurve`] trait and are looked
//! up by name in a [`CurveRegistry`]. The BPSK family is the default.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Linear channel gains, transmit power and harvester constants (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwiptLink {
    /// Transmitter → actuator gain.
    pub h_a: f64,
    /// Transmitter → sensor gain.
    pub h_s: f64,
    /// Sensor → estimator gain.
    pub h_e: f64,
    /// Transmit power in watts.
    pub p_tx: f64,
    /// Energy conversion efficiency ξ.
    pub xi: f64,
    /// Receiver antenna noise power σ_e² in watts.
    pub sigma_e2: f64,
}

impl SwiptLink {
    /// Link with ξ = 1 and σ_e² = 0.
    pub fn new(h_a: f64, h_s: f64, h_e: f64, p_tx: f64) -> Result<Self> {
        let link = Self { h_a, h_s, h_e, p_tx, xi: 1.0, sigma_e2: 0.0 };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("h_a", self.h_a), ("h_s", self.h_s), ("h_e", self.h_e)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.p_tx.is_finite() || self.p_tx <= 0.0 {
            return Err(Error::InvalidParameter(format!("p_tx must be > 0, got {}", self.p_tx)));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(Error::InvalidParameter(format!("xi must lie in [0, 1], got {}", self.xi)));
        }
        if !self.sigma_e2.is_finite() || self.sigma_e2 < 0.0 {
            return Err(Error::InvalidParameter(format!("sigma_e2 must be >= 0, got {}", self.sigma_e2)));
        }
        Ok(())
    }
}

/// BPSK packet parameters: bits per packet, symbol time (s), noise density N₀ (W/Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BpskParams {
    pub bits_per_packet: u32,
    pub t_s: f64,
    pub n0: f64,
}

impl BpskParams {
    pub fn new(bits_per_packet: u32, t_s: f64, n0: f64) -> Result<Self> {
        if bits_per_packet == 0 {
            return Err(Error::InvalidParameter("bits_per_packet must be >= 1".into()));
        }
        if !(t_s.is_finite() && t_s > 0.0) {
            return Err(Error::InvalidParameter(format!("T_s must be > 0, got {t_s}")));
        }
        if !(n0.is_finite() && n0 > 0.0) {
            return Err(Error::InvalidParameter(format!("N_0 must be > 0, got {n0}")));
        }
        Ok(Self { bits_per_packet, t_s, n0 })
    }
}

/// Fraction α of the transmit power spent on the control signal.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct PowerSplit(f64);

impl PowerSplit {
    pub fn new(alpha: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")))
        }
    }

    pub fn alpha(self) -> f64 {
        self.0
    }
}

/// Harvested power `r = ξ (h_s (1-α) p + σ_e²)`.
pub fn harvest_power(link: &SwiptLink, split: PowerSplit) -> f64 {
    link.xi * (link.h_s * (1.0 - split.alpha()) * link.p_tx + link.sigma_e2)
}

/// Standard normal CDF via the complementary error function.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `10^(g/10)`, power convention.
pub fn db_to_linear(g_db: f64) -> f64 {
    10f64.powf(g_db / 10.0)
}

fn bpsk_success(received: f64, bpsk: &BpskParams) -> f64 {
    let b = f64::from(bpsk.bits_per_packet);
    let snr = (2.0 * received.max(0.0) * bpsk.t_s / (b * bpsk.n0)).sqrt();
    std_normal_cdf(snr).powi(bpsk.bits_per_packet as i32)
}

/// Probability that the control packet reaches the actuator: `η(h_a α p)`.
pub fn eta_success(link: &SwiptLink, bpsk: &BpskParams, split: PowerSplit) -> f64 {
    bpsk_success(link.h_a * split.alpha() * link.p_tx, bpsk)
}

/// Probability that the sensor packet reaches the estimator: `γ(h_e r)`.
pub fn gamma_success(link: &SwiptLink, bpsk: &BpskParams, r: f64) -> f64 {
    bpsk_success(link.h_e * r, bpsk)
}

/// Packet-success probability as a function of received power (watts).
/// Implementations must be nondecreasing and continuous.
pub trait SuccessCurve: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn success(&self, received_power: f64) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct BpskCurve(pub BpskParams);

impl SuccessCurve for BpskCurve {
    fn name(&self) -> &'static str {
        "bpsk"
    }
    fn success(&self, received_power: f64) -> f64 {
        bpsk_success(received_power, &self.0)
    }
}

/// A link that never drops packets.
#[derive(Debug, Clone, Copy)]
pub struct PerfectCurve;

impl SuccessCurve for PerfectCurve {
    fn name(&self) -> &'static str {
        "perfect"
    }
    fn success(&self, _received_power: f64) -> f64 {
        1.0
    }
}

/// A link with a fixed success probability regardless of power.
#[derive(Debug, Clone, Copy)]
pub struct ConstantCurve(pub f64);

impl SuccessCurve for ConstantCurve {
    fn name(&self) -> &'static str {
        "constant"
    }
    fn success(&self, _received_power: f64) -> f64 {
        self.0
    }
}

type CurveFactory = fn(&BpskParams) -> Arc<dyn SuccessCurve>;

/// Name → constructor table for success curves.
pub struct CurveRegistry {
    factories: BTreeMap<&'static str, CurveFactory>,
}

impl CurveRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &'static str, factory: CurveFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, name: &str, bpsk: &BpskParams) -> Option<Arc<dyn SuccessCurve>> {
        self.factories.get(name).map(|f| f(bpsk))
    }
}

impl Default for CurveRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register("bpsk", |p| Arc::new(BpskCurve(*p)));
        reg.register("perfect", |_| Arc::new(PerfectCurve));
        reg
    }
}

/// Link constants plus one success curve per direction. This is what every
/// α-dependent computation consumes.
#[derive(Debug, Clone)]
pub struct SwiptChannel {
    pub link: SwiptLink,
    pub control: Arc<dyn SuccessCurve>,
    pub sensing: Arc<dyn SuccessCurve>,
}

impl SwiptChannel {
    pub fn new(link: SwiptLink, control: Arc<dyn SuccessCurve>, sensing: Arc<dyn SuccessCurve>) -> Self {
        Self { link, control, sensing }
    }

    /// Both directions use the BPSK curve.
    pub fn bpsk(link: SwiptLink, bpsk: BpskParams) -> Self {
        let curve: Arc<dyn SuccessCurve> = Arc::new(BpskCurve(bpsk));
        Self::new(link, curve.clone(), curve)
    }

    /// Control-link success probability η(α).
    pub fn eta(&self, split: PowerSplit) -> f64 {
        self.control.success(self.link.h_a * split.alpha() * self.link.p_tx)
    }

    /// Sensing-link success probability γ(α), through the harvested power.
    pub fn gamma(&self, split: PowerSplit) -> f64 {
        self.sensing.success(self.link.h_e * harvest_power(&self.link, split))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(a: f64) -> PowerSplit {
        PowerSplit::new(a).unwrap()
    }

    // composite Simpson on [-40, z]; independent of erfc
    fn cdf_by_quadrature(z: f64) -> f64 {
        let n = 200_000;
        let lo = -40.0;
        let h = (z - lo) / n as f64;
        let f = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(lo) + f(z);
        for i in 1..n {
            let x = lo + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn harvest_examples() {
        let mut link = SwiptLink::new(1.0, 1.0, 1.0, 3e-4).unwrap();
        assert_eq!(harvest_power(&link, split(1.0)), 0.0);
        assert!((harvest_power(&link, split(0.0)) - 3e-4).abs() < 1e-18);
        link.xi = 0.5;
        link.sigma_e2 = 1e-6;
        link.h_s = 0.5;
        assert!((harvest_power(&link, split(0.5)) - 3.8e-5).abs() < 1e-18);
    }

    #[test]
    fn harvest_is_affine_in_one_minus_alpha() {
        let link = SwiptLink { h_a: 1.0, h_s: 0.7, h_e: 1.0, p_tx: 2e-3, xi: 0.8, sigma_e2: 1e-7 };
        let pts: Vec<(f64, f64)> =
            [0.1, 0.4, 0.9].iter().map(|&a| (1.0 - a, harvest_power(&link, split(a)))).collect();
        let slope = 0.8 * 0.7 * 2e-3;
        for w in pts.windows(2) {
            let s = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            assert!((s - slope).abs() < 1e-15);
        }
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(40.0) - 1.0).abs() <= 1e-15);
        let oracle = cdf_by_quadrature(1.0);
        assert!((oracle - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((std_normal_cdf(1.0) - oracle).abs() < 1e-12);
        for z in [-3.0, -1.5, -0.2, 0.7, 2.5] {
            assert!((std_normal_cdf(z) - cdf_by_quadrature(z)).abs() < 1e-12, "z={z}");
        }
    }

    #[test]
    fn eta_examples() {
        let link = SwiptLink::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let bpsk = BpskParams::new(2, 1.0, 1.0).unwrap();
        assert!((eta_success(&link, &bpsk, split(0.0)) - 0.25).abs() < 1e-15);
        // B = 1 and 2 α p T_s / N₀ = 1 gives z = 1
        let bpsk1 = BpskParams::new(1, 0.5, 1.0).unwrap();
        assert!((eta_success(&link, &bpsk1, split(1.0)) - 0.841_344_746_068_542_9).abs() < 1e-12);
        let strong = SwiptLink::new(1e6, 1.0, 1.0, 1.0).unwrap();
        assert!((eta_success(&strong, &bpsk, split(1.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_examples() {
        let link = SwiptLink::new(1.0, 1.0, db_to_linear(-3.0), 3e-4).unwrap();
        let bpsk = BpskParams::new(2, 2e-7, 2e-11).unwrap();
        assert!((gamma_success(&link, &bpsk, 0.0) - 0.25).abs() < 1e-15);
        assert!((gamma_success(&link, &bpsk, 1e3) - 1.0).abs() < 1e-15);
        // Independent evaluation: z² = 2·0.501187·3e-4·2e-7/(2·2e-11) = 1.503561...
        let r = harvest_power(&link, split(0.0));
        let z = (2.0 * 10f64.powf(-0.3) * 3e-4 * 2e-7 / (2.0 * 2e-11)).sqrt();
        let phi = cdf_by_quadrature(z);
        assert!((gamma_success(&link, &bpsk, r) - phi * phi).abs() < 1e-12);
    }

    #[test]
    fn db_conversion() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((db_to_linear(-3.0) - 0.501_187_233_627_272_3).abs() < 1e-15);
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn probabilities_monotone_on_fine_grid() {
        let link = SwiptLink::new(1.0, 1.0, db_to_linear(-3.0), 3e-4).unwrap();
        let ch = SwiptChannel::bpsk(link, BpskParams::new(2, 2e-7, 2e-11).unwrap());
        let mut prev = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..1000 {
            let s = split(i as f64 / 999.0);
            let (e, g) = (ch.eta(s), ch.gamma(s));
            assert!((0.0..=1.0).contains(&e) && (0.0..=1.0).contains(&g));
            assert!(e >= prev.0 && g <= prev.1);
            prev = (e, g);
        }
    }

    #[test]
    fn registry_lookup() {
        let reg = CurveRegistry::default();
        let bpsk = BpskParams::new(2, 1.0, 1.0).unwrap();
        assert_eq!(reg.build("bpsk", &bpsk).unwrap().name(), "bpsk");
        assert_eq!(reg.build("perfect", &bpsk).unwrap().success(0.0), 1.0);
        assert!(reg.build("qam", &bpsk).is_none());
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["bpsk", "perfect"]);
    }

    #[test]
    fn invalid_inputs() {
        assert!(PowerSplit::new(1.5).is_err());
        assert!(SwiptLink::new(-1.0, 1.0, 1.0, 1.0).is_err());
        assert!(SwiptLink::new(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(BpskParams::new(0, 1.0, 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn probabilities_in_unit_interval(h in 0.0f64..1e3, p in 1e-9f64..1.0, a in 0.0f64..=1.0,
                                          ts in 1e-9f64..1.0, n0 in 1e-12f64..1.0, b in 1u32..16) {
            let link = SwiptLink::new(h, h, h, p).unwrap();
            let bpsk = BpskParams::new(b, ts, n0).unwrap();
            let s = split(a);
            let e = eta_success(&link, &bpsk, s);
            let g = gamma_success(&link, &bpsk, harvest_power(&link, s));
            proptest::prop_assert!((0.0..=1.0).contains(&e));
            proptest::prop_assert!((0.0..=1.0).contains(&g));
        }
    }
}
