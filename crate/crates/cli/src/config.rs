//! The JSON run configuration. One file describes one reproducible
//! experiment; unknown keys are rejected at every level.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use pphi2_core::{CovKernel, InteractionSpec, LatticeSpec, Method, MetropolisConfig, SpatialSymbol, WickPolynomial};
use pphi2_fock::FockBasisSpec;
use pphi2_schwinger::battery::{BatteryConfig, CRITERIA};

use crate::error::{invalid, CliError, Result};

/// Version of both the configuration and the report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Bases larger than this are refused rather than assembled.
pub const FOCK_CAP: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Suite {
    /// Deterministic free-theory identities: Matsubara sums, the lattice
    /// Fourier transform and Gaussian moments.
    FreeIdentities,
    /// All eleven acceptance criteria.
    Full,
    /// One acceptance criterion.
    Criterion(usize),
    /// Sharp-time two-point function of the configured model.
    Schwinger,
    /// Low spectrum of the configured circle Hamiltonian.
    Spectrum,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Suite::FreeIdentities => write!(f, "free-identities"),
            Suite::Full => write!(f, "full"),
            Suite::Criterion(n) => write!(f, "criterion-{n}"),
            Suite::Schwinger => write!(f, "schwinger"),
            Suite::Spectrum => write!(f, "spectrum"),
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "free-identities" => Ok(Suite::FreeIdentities),
            "full" => Ok(Suite::Full),
            "schwinger" => Ok(Suite::Schwinger),
            "spectrum" => Ok(Suite::Spectrum),
            _ => {
                let id = s
                    .strip_prefix("criterion-")
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|n| CRITERIA.iter().any(|c| c.0 == *n));
                id.map(Suite::Criterion).ok_or_else(|| {
                    format!("unknown suite `{s}`; expected free-identities, full, schwinger, spectrum or criterion-1 .. criterion-{}", CRITERIA.len())
                })
            }
        }
    }
}

impl TryFrom<String> for Suite {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<Suite> for String {
    fn from(s: Suite) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub beta: f64,
    /// Half-length `L` of the periodic spatial box `[-L, L]`.
    pub length: f64,
    pub nt: usize,
    pub nx: usize,
    pub mass: f64,
    pub symbol: SpatialSymbol,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            beta: 1.0,
            length: 4.0,
            nt: 16,
            nx: 64,
            mass: 1.0,
            symbol: SpatialSymbol::Continuum,
        }
    }
}

impl LatticeConfig {
    pub fn spec(&self) -> Result<LatticeSpec> {
        LatticeSpec::new(self.beta, self.length, self.nt, self.nx, self.mass).map_err(invalid)
    }

    pub fn kernel(&self) -> Result<CovKernel> {
        CovKernel::with_options(self.spec()?, self.symbol, None).map_err(invalid)
    }
}

/// The interaction `λ :P:` on the window `[-l, l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InteractionConfig {
    /// Sum of terms `[±][coef][*]x[^k]`, e.g. `"x^4 - 0.5*x^2"`.
    pub poly: String,
    pub lambda: f64,
    pub l: f64,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        InteractionConfig {
            poly: "x^4".into(),
            lambda: 0.1,
            l: 2.0,
        }
    }
}

impl InteractionConfig {
    /// Coefficients of `λ P` in ordinary monomials.
    pub fn coeffs(&self) -> Result<Vec<f64>> {
        if !self.lambda.is_finite() {
            return Err(CliError::Config(format!("lambda must be finite, got {}", self.lambda)));
        }
        let p = WickPolynomial::parse(&self.poly, 0.0).map_err(|e| CliError::Config(format!("poly `{}`: {e}", self.poly)))?;
        let p = WickPolynomial::new(p.coeffs.iter().map(|c| c * self.lambda).collect(), 0.0);
        if self.lambda != 0.0 {
            p.check_bounded_below().map_err(invalid)?;
        }
        Ok(p.coeffs)
    }

    pub fn wick(&self) -> Result<WickPolynomial<f64>> {
        Ok(WickPolynomial::new(self.coeffs()?, 0.0))
    }

    pub fn spec(&self, kernel: &CovKernel) -> Result<InteractionSpec> {
        InteractionSpec::new(kernel, self.coeffs()?, self.l).map_err(invalid)
    }
}

/// Truncated Fock space; `beta` and `mass` are taken from the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FockConfig {
    /// Circle cutoff `K`: modes `|n| ≤ K`.
    pub modes: usize,
    pub n_max: usize,
    /// Number of spectrum rows to report.
    pub levels: usize,
}

impl Default for FockConfig {
    fn default() -> Self {
        FockConfig { modes: 2, n_max: 6, levels: 10 }
    }
}

impl FockConfig {
    pub fn basis_spec(&self, beta: f64, mass: f64) -> Result<FockBasisSpec> {
        let spec = FockBasisSpec::new(beta, mass, self.modes, self.n_max).map_err(invalid)?.with_cap(FOCK_CAP);
        spec.validate().map_err(invalid)?;
        if self.levels == 0 {
            return Err(CliError::Config("levels must be at least 1".into()));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub samples: usize,
    pub method: Method,
    pub metropolis: MetropolisConfig,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples: 20_000,
            method: Method::Reweight,
            metropolis: MetropolisConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub suites: Vec<Suite>,
    /// Multiplies the Monte Carlo sample counts of the acceptance criteria.
    pub sample_scale: f64,
    pub lattice: LatticeConfig,
    pub interaction: InteractionConfig,
    pub fock: FockConfig,
    pub mc: McConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: BatteryConfig::default().seed,
            suites: vec![Suite::FreeIdentities],
            sample_scale: 1.0,
            lattice: LatticeConfig::default(),
            interaction: InteractionConfig::default(),
            fock: FockConfig::default(),
            mc: McConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses and validates; syntax and schema errors carry the line and
    /// column reported by the parser.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            let full = e.to_string();
            // The position is reported separately.
            let msg = full.rsplit_once(" at line ").map_or(full.as_str(), |(m, _)| m).to_string();
            CliError::ConfigSyntax {
                path: origin.to_string(),
                line: e.line(),
                column: e.column(),
                msg,
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn battery(&self) -> BatteryConfig {
        BatteryConfig {
            seed: self.seed,
            sample_scale: self.sample_scale,
        }
    }

    /// Checks everything that can be checked without running a suite.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if self.suites.is_empty() {
            return Err(CliError::Config("no suites selected".into()));
        }
        if !(self.sample_scale.is_finite() && self.sample_scale > 0.0) {
            return Err(CliError::Config(format!("sample_scale must be > 0, got {}", self.sample_scale)));
        }
        if self.mc.samples < 100 {
            return Err(CliError::Config(format!("mc.samples must be at least 100, got {}", self.mc.samples)));
        }
        let m = &self.mc.metropolis;
        if m.chains == 0 || m.thin == 0 || !(m.step > 0.0) {
            return Err(CliError::Config("mc.metropolis needs chains >= 1, thin >= 1 and step > 0".into()));
        }
        let kernel = self.lattice.kernel()?;
        self.interaction.spec(&kernel)?;
        self.fock.basis_spec(self.lattice.beta, self.lattice.mass)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in [Suite::FreeIdentities, Suite::Full, Suite::Criterion(7), Suite::Schwinger, Suite::Spectrum] {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("criterion-12".parse::<Suite>().is_err());
        assert!("criterion-0".parse::<Suite>().is_err());
    }

    #[test]
    fn defaults_validate_and_echo() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text, "echo").unwrap(), cfg);
    }

    #[test]
    fn diagnostics_carry_positions() {
        let err = RunConfig::from_json("{\n  \"seed\": 3,\n  \"bogus\": 1\n}", "c.json").unwrap_err();
        match err {
            CliError::ConfigSyntax { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        let err = RunConfig::from_json("{\"lattice\": {\"nt\": 16,}}", "c.json").unwrap_err();
        assert_eq!(err.exit_code(), crate::error::exit::CONFIG);
        let err = RunConfig::from_json("{\"lattice\": {\"nt\": 7}}", "c.json").unwrap_err();
        assert!(matches!(err, CliError::Config(_)), "{err}");
        let err = RunConfig::from_json("{\"interaction\": {\"poly\": \"-x^4\"}}", "c.json").unwrap_err();
        assert!(matches!(err, CliError::Config(_)), "{err}");
    }
}
