//! Experiment configuration: one JSON document, validated before anything
//! runs. Every struct rejects keys it does not know.

use std::path::{Path, PathBuf};

use qpspec_core::determinants::Boundary;
use qpspec_core::family::builtins;
use qpspec_core::{Frequency, OperatorFamily, SamplingFunction};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub family: FamilySpec,
    #[serde(default)]
    pub energy: EnergySpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub commands: Vec<Command>,
    #[serde(default)]
    pub lyapunov: LyapunovBlock,
    #[serde(default)]
    pub acceleration: AccelerationBlock,
    #[serde(default)]
    pub zeros: ZerosBlock,
    #[serde(default)]
    pub local_zeros: LocalZerosBlock,
    #[serde(default)]
    pub ids: IdsBlock,
    #[serde(default)]
    pub holder: HolderBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Lyapunov,
    Acceleration,
    Zeros,
    LocalZeros,
    Ids,
    Holder,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Lyapunov => "lyapunov",
            Command::Acceleration => "acceleration",
            Command::Zeros => "zeros",
            Command::LocalZeros => "local-zeros",
            Command::Ids => "ids",
            Command::Holder => "holder",
            Command::Verify => "verify",
        }
    }
}

/// `"golden"` or a number in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaSpec {
    Value(f64),
    Named(String),
}

impl Default for OmegaSpec {
    fn default() -> Self {
        OmegaSpec::Named("golden".into())
    }
}

impl OmegaSpec {
    pub fn resolve(&self) -> Result<Frequency, CliError> {
        match self {
            OmegaSpec::Named(s) if s == "golden" => Ok(Frequency::golden()),
            OmegaSpec::Named(s) => Err(CliError::Config(format!(
                "family.omega: unknown frequency name `{s}` (expected \"golden\" or a number)"
            ))),
            OmegaSpec::Value(w) => {
                Frequency::new(*w).map_err(|e| CliError::Config(format!("family.omega: {e}")))
            }
        }
    }
}

fn default_delta() -> f64 {
    0.1
}

fn default_lambda() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `v ≡ 0`, `B ≡ 1`.
    Free {
        #[serde(default)]
        omega: OmegaSpec,
        #[serde(default = "default_delta")]
        delta: f64,
    },
    /// `v = 2λ cos 2πθ`, `B ≡ 1`.
    Amo {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        omega: OmegaSpec,
        #[serde(default = "default_delta")]
        delta: f64,
    },
    /// `v = 2λ cos 2π kθ`, `B ≡ 1`.
    Cosine {
        #[serde(default = "default_lambda")]
        lambda: f64,
        degree: i64,
        #[serde(default)]
        omega: OmegaSpec,
        #[serde(default = "default_delta")]
        delta: f64,
    },
    /// The two-channel family of `builtins::block_demo`.
    BlockDemo {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        mu: f64,
        #[serde(default)]
        beta: f64,
        #[serde(default)]
        omega: OmegaSpec,
        #[serde(default = "default_delta")]
        delta: f64,
    },
    /// Fourier tables for `B` and `V`.
    Explicit {
        #[serde(default)]
        omega: OmegaSpec,
        #[serde(default = "default_delta")]
        delta: f64,
        b: SamplingFunction,
        v: SamplingFunction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        condition_cap: Option<f64>,
    },
}

impl FamilySpec {
    pub fn build(&self) -> Result<OperatorFamily, CliError> {
        let check_delta = |delta: f64| {
            if delta > 0.0 && delta.is_finite() {
                Ok(delta)
            } else {
                Err(CliError::Config(format!("family.delta must be positive, got {delta}")))
            }
        };
        let fam = match self {
            FamilySpec::Free { omega, delta } => builtins::free(omega.resolve()?, check_delta(*delta)?),
            FamilySpec::Amo { lambda, omega, delta } => {
                builtins::almost_mathieu(*lambda, omega.resolve()?, check_delta(*delta)?)
            }
            FamilySpec::Cosine { lambda, degree, omega, delta } => {
                if *degree == 0 {
                    return Err(CliError::Config("family.degree must be nonzero".into()));
                }
                builtins::cosine(*lambda, *degree, omega.resolve()?, check_delta(*delta)?)
            }
            FamilySpec::BlockDemo { lambda, mu, beta, omega, delta } => {
                builtins::block_demo(*lambda, *mu, *beta, omega.resolve()?, check_delta(*delta)?)
            }
            FamilySpec::Explicit { omega, delta, b, v, condition_cap } => {
                let w = omega.resolve()?;
                let cap = condition_cap.unwrap_or(qpspec_core::family::DEFAULT_CONDITION_CAP);
                OperatorFamily::with_condition_cap(w, b.clone(), v.clone(), check_delta(*delta)?, cap)
                    .map_err(|e| CliError::Config(format!("family: {e}")))?
            }
        };
        Ok(fam)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergySpec {
    Value(f64),
    /// Eigenvalue of `H_θ|_{[0,volume−1]}` closest to `target`.
    NearestEigenvalue {
        #[serde(default = "default_volume")]
        volume: usize,
        #[serde(default)]
        target: f64,
        #[serde(default)]
        theta: f64,
    },
}

fn default_volume() -> usize {
    128
}

impl Default for EnergySpec {
    fn default() -> Self {
        EnergySpec::NearestEigenvalue {
            volume: default_volume(),
            target: 0.0,
            theta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovBlock {
    pub n: usize,
    pub grid: usize,
    pub eps: Vec<f64>,
}

impl Default for LyapunovBlock {
    fn default() -> Self {
        LyapunovBlock {
            n: 256,
            grid: 500,
            eps: vec![0.0, 0.01, 0.02, 0.03, 0.04, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccelerationBlock {
    pub eps0: f64,
    pub n: usize,
    pub grid: usize,
    pub step: f64,
    pub residual_threshold: f64,
}

impl Default for AccelerationBlock {
    fn default() -> Self {
        AccelerationBlock {
            eps0: 0.01,
            n: 1000,
            grid: 500,
            step: qpspec_core::lyapunov::DEFAULT_STEP,
            residual_threshold: qpspec_core::lyapunov::DEFAULT_RESIDUAL_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZerosBlock {
    pub n: Vec<usize>,
    /// Annulus half-width in ε; at most `δ/2`.
    pub eps_half: f64,
    pub boundary: Boundary,
    /// Expected `κ`; taken from `acceleration` when that ran first.
    pub kappa_ref: Option<f64>,
}

impl Default for ZerosBlock {
    fn default() -> Self {
        ZerosBlock {
            n: vec![16, 32, 64, 128],
            eps_half: 0.05,
            boundary: Boundary::Dirichlet,
            kappa_ref: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalZerosBlock {
    pub n: usize,
    /// Number of random centres on the unit circle.
    pub centers: usize,
    /// Ball radius; defaults to `exp(−(log n)^c0)`.
    pub radius: Option<f64>,
    pub c0: f64,
    pub eps_margin: f64,
    pub kappa_cap: usize,
    pub boundary: Boundary,
}

impl Default for LocalZerosBlock {
    fn default() -> Self {
        LocalZerosBlock {
            n: 64,
            centers: 8,
            radius: None,
            c0: 1.5,
            eps_margin: 0.1,
            kappa_cap: 2,
            boundary: Boundary::Dirichlet,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EtaGrid {
    pub hi: f64,
    pub lo: f64,
    pub points: usize,
}

impl Default for EtaGrid {
    fn default() -> Self {
        EtaGrid {
            hi: 1e-2,
            lo: 1e-4,
            points: 8,
        }
    }
}

impl EtaGrid {
    pub fn values(&self, field: &str) -> Result<Vec<f64>, CliError> {
        if !(self.hi > self.lo && self.lo > 0.0) || self.points < 2 {
            return Err(CliError::Config(format!(
                "{field}: need hi > lo > 0 and at least two points"
            )));
        }
        Ok(qpspec_core::ids::log_spaced_desc(self.hi, self.lo, self.points))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdsBlock {
    pub n: usize,
    pub theta: f64,
    /// Energy of the window counts; defaults to the run energy.
    pub e0: Option<f64>,
    pub eta: EtaGrid,
    /// Samples of the finite-volume IDS curve.
    pub curve_points: usize,
}

impl Default for IdsBlock {
    fn default() -> Self {
        IdsBlock {
            n: 2000,
            theta: 0.0,
            e0: None,
            eta: EtaGrid::default(),
            curve_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolderBlock {
    pub n: usize,
    /// Number of equispaced phases.
    pub phases: usize,
    pub e0: Option<f64>,
    pub eta: EtaGrid,
    /// `κ^d`; measured with the acceleration settings when absent.
    pub kappa: Option<i64>,
    pub positivity_gap: f64,
}

impl Default for HolderBlock {
    fn default() -> Self {
        HolderBlock {
            n: 20_000,
            phases: 8,
            e0: None,
            eta: EtaGrid::default(),
            kappa: None,
            positivity_gap: qpspec_core::lyapunov::DEFAULT_NU_GAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBlock {
    /// Random instances per identity.
    pub samples: usize,
    pub n: Vec<usize>,
    pub grid: usize,
    pub tol_symplectic: f64,
    pub tol_detp: f64,
    pub tol_green: f64,
    pub tol_duality: f64,
    pub tol_route: f64,
    pub tol_recursion: f64,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        VerifyBlock {
            samples: 20,
            n: vec![4, 16, 64],
            grid: 200,
            tol_symplectic: 1e-10,
            tol_detp: 1e-7,
            tol_green: 1e-8,
            tol_duality: 1e-8,
            tol_route: 1e-9,
            tol_recursion: 1e-9,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Config(format!(
                "{} (at `{path}`, line {}, column {})",
                inner,
                inner.line(),
                inner.column()
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.version != SCHEMA_VERSION {
            return bad(format!(
                "version: unsupported schema version {} (this build reads {SCHEMA_VERSION})",
                self.version
            ));
        }
        if self.commands.is_empty() {
            return bad("commands: at least one command is required".into());
        }
        if self.lyapunov.n == 0 || self.lyapunov.grid == 0 || self.lyapunov.eps.is_empty() {
            return bad("lyapunov: n, grid and eps must be nonempty".into());
        }
        if self.acceleration.n == 0 || self.acceleration.grid == 0 || !(self.acceleration.step > 0.0) {
            return bad("acceleration: n, grid and step must be positive".into());
        }
        if self.zeros.n.is_empty() || self.zeros.n.contains(&0) || !(self.zeros.eps_half > 0.0) {
            return bad("zeros: n must list positive volumes and eps_half must be positive".into());
        }
        if self.local_zeros.n == 0 || self.local_zeros.centers == 0 {
            return bad("local_zeros: n and centers must be positive".into());
        }
        if !(0.0..1.0).contains(&self.local_zeros.eps_margin) {
            return bad("local_zeros.eps_margin must lie in [0, 1)".into());
        }
        if matches!(self.local_zeros.radius, Some(r) if !(r > 0.0)) {
            return bad("local_zeros.radius must be positive".into());
        }
        if self.ids.n == 0 || self.ids.curve_points < 2 {
            return bad("ids: n must be positive and curve_points at least 2".into());
        }
        self.ids.eta.values("ids.eta")?;
        if self.holder.n == 0 || self.holder.phases == 0 {
            return bad("holder: n and phases must be positive".into());
        }
        self.holder.eta.values("holder.eta")?;
        if self.verify.samples == 0 || self.verify.n.iter().any(|&n| n < 2) || self.verify.grid == 0 {
            return bad("verify: samples and grid must be positive and every n at least 2".into());
        }
        if let EnergySpec::NearestEigenvalue { volume: 0, .. } = self.energy {
            return bad("energy.nearest_eigenvalue.volume must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const AMO: &str = r#"{"version": 1, "family": {"name": "amo", "lambda": 3, "omega": "golden"}, "commands": ["verify"]}"#;

    #[test]
    fn minimal_amo_parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(AMO).unwrap();
        assert_eq!(cfg.commands, vec![Command::Verify]);
        assert_eq!(cfg.lyapunov, LyapunovBlock::default());
        let fam = cfg.family.build().unwrap();
        assert!((fam.omega() - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert_eq!(fam.d(), 1);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig::from_json(AMO).unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentConfig::from_json(
            r#"{"version": 1, "family": {"name": "amo", "lambda": 3, "lamda": 2}, "commands": ["verify"]}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("lamda"), "{err}");
        let err = ExperimentConfig::from_json(
            r#"{"version": 1, "family": {"name": "free"}, "commands": ["verify"], "lyapunov": {"grd": 3}}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("grd") && err.contains("lyapunov"), "{err}");
    }

    #[test]
    fn unknown_family_and_frequency_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"version": 1, "family": {"name": "hofstadter"}, "commands": ["verify"]}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("hofstadter"), "{err}");
        let cfg = ExperimentConfig::from_json(
            r#"{"version": 1, "family": {"name": "free", "omega": "silver"}, "commands": ["verify"]}"#,
        )
        .unwrap();
        assert!(cfg.family.build().is_err());
    }

    #[test]
    fn amo_coefficients_are_lambda() {
        let cfg = ExperimentConfig::from_json(AMO).unwrap();
        let fam = cfg.family.build().unwrap();
        let v = fam.v().coefficients();
        assert_eq!(v.keys().copied().collect::<Vec<_>>(), vec![-1, 1]);
        assert!((v[&1][(0, 0)].re - 3.0).abs() < 1e-15);
        assert!((v[&-1][(0, 0)].re - 3.0).abs() < 1e-15);
    }

    #[test]
    fn free_and_block_demo() {
        let free: FamilySpec = serde_json::from_str(r#"{"name": "free"}"#).unwrap();
        let fam = free.build().unwrap();
        assert_eq!(fam.d(), 1);
        assert!(fam.v().coefficients().values().all(|m| m.norm() == 0.0));
        let demo: FamilySpec = serde_json::from_str(r#"{"name": "block-demo", "mu": 0.5, "beta": 0.3}"#).unwrap();
        assert_eq!(demo.build().unwrap().d(), 2);
    }

    #[test]
    fn explicit_family_parses() {
        let text = r#"{"name": "explicit", "omega": 0.4142135623730951, "delta": 0.1,
            "b": {"dim": 1, "strip_delta": 0.1, "modes": [{"mode": 0, "matrix": [[[1, 0]]]}]},
            "v": {"dim": 1, "hermitian": true, "strip_delta": 0.1,
                  "modes": [{"mode": 1, "matrix": [[[2, 0]]]}, {"mode": -1, "matrix": [[[2, 0]]]}]}}"#;
        let spec: FamilySpec = serde_json::from_str(text).unwrap();
        let fam = spec.build().unwrap();
        assert_eq!(fam.degree(), 1);
    }

    #[test]
    fn wrong_version_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"version": 7, "family": {"name": "free"}, "commands": ["verify"]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("version"));
    }
}
