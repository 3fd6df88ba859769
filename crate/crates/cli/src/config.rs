//! `key = value` run configuration.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use rmlab::compare::LoadProfile;
use rmlab::{BcMode, MaterialParams, Variant};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Mid-surface state used by the sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Bump,
    Zero,
    Random,
}

impl StateKind {
    fn name(self) -> &'static str {
        match self {
            StateKind::Bump => "bump",
            StateKind::Zero => "zero",
            StateKind::Random => "random",
        }
    }
}

impl FromStr for StateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bump" => Ok(StateKind::Bump),
            "zero" => Ok(StateKind::Zero),
            "random" => Ok(StateKind::Random),
            other => Err(format!("unknown state `{other}` (bump|zero|random)")),
        }
    }
}

/// Deformation examined by the `rigidity` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Rigid,
    Recovery,
    Perturbation,
}

impl FieldKind {
    fn name(self) -> &'static str {
        match self {
            FieldKind::Rigid => "rigid",
            FieldKind::Recovery => "recovery",
            FieldKind::Perturbation => "perturbation",
        }
    }
}

impl FromStr for FieldKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rigid" => Ok(FieldKind::Rigid),
            "recovery" => Ok(FieldKind::Recovery),
            "perturbation" => Ok(FieldKind::Perturbation),
            other => Err(format!("unknown field `{other}` (rigid|recovery|perturbation)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub material: MaterialParams,
    pub sigma: f64,
    /// `None` means derived from `sigma = 2 alpha - 2`.
    pub alpha: Option<f64>,
    pub h_list: Vec<f64>,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub bc_mode: BcMode,
    pub variant: Variant,
    pub state: StateKind,
    pub load: LoadProfile,
    pub amplitude: f64,
    pub seed: u64,
    pub samples: usize,
    pub field: FieldKind,
    pub deltas: Vec<f64>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            material: MaterialParams::default(),
            sigma: 5.0,
            alpha: None,
            h_list: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            nx: 33,
            ny: 33,
            nz: 6,
            lx: 1.0,
            ly: 1.0,
            bc_mode: BcMode::Enforce,
            variant: Variant::Plain,
            state: StateKind::Bump,
            load: LoadProfile::Bump,
            amplitude: 10.0,
            seed: 0,
            samples: 1000,
            field: FieldKind::Rigid,
            deltas: vec![1e-3, 1e-2, 1e-1],
            max_iters: None,
            grad_tol: None,
            out: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| CliError::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

/// Number or simple fraction such as `1/8`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
            let den: f64 = den.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
            num / den
        }
        None => s.parse().map_err(|e| format!("`{s}`: {e}"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{s}` is not a finite number"))
    }
}

/// Comma-separated list of numbers or fractions.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_number).collect()
}

impl RunConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let number = |v: &str| parse_number(v).map_err(|e| CliError::Config(format!("{key}: {e}")));
        let list = |v: &str| parse_list(v).map_err(|e| CliError::Config(format!("{key}: {e}")));
        match key {
            "beta" => self.material.beta = number(value)?,
            "mu" => self.material.mu = number(value)?,
            "lambda" => self.material.lambda = number(value)?,
            "c1" => self.material.c1 = number(value)?,
            "l" => self.material.l = number(value)?,
            "epsilon" => self.material.epsilon = number(value)?,
            "sigma" => self.sigma = number(value)?,
            "alpha" => self.alpha = Some(number(value)?),
            "h_list" => self.h_list = list(value)?,
            "nx" => self.nx = parse(key, value)?,
            "ny" => self.ny = parse(key, value)?,
            "nz" => self.nz = parse(key, value)?,
            "lx" => self.lx = number(value)?,
            "ly" => self.ly = number(value)?,
            "bc_mode" => self.bc_mode = parse(key, value)?,
            "variant" => self.variant = parse(key, value)?,
            "state" => self.state = parse(key, value)?,
            "load" => self.load = parse(key, value)?,
            "amplitude" => self.amplitude = number(value)?,
            "seed" => self.seed = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "field" => self.field = parse(key, value)?,
            "deltas" => self.deltas = list(value)?,
            "max_iters" => self.max_iters = Some(parse(key, value)?),
            "grad_tol" => self.grad_tol = Some(number(value)?),
            "out" => self.out = PathBuf::from(value),
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Force exponent, derived from `sigma` unless set.
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(0.5 * (self.sigma + 2.0))
    }

    /// Material parameters with the run's `sigma`.
    pub fn params(&self) -> MaterialParams {
        MaterialParams {
            sigma: self.sigma,
            ..self.material
        }
    }

    /// Checks the invariants shared by all commands. Material constants are
    /// left to the commands, since `check-material` reports on invalid ones.
    pub fn validate(&self) -> Result<(), CliError> {
        let err = |m: String| Err(CliError::Config(m));
        if !(self.sigma >= 4.0) {
            return err(format!("sigma must be >= 4, got {}", self.sigma));
        }
        if self.h_list.is_empty()
            || !self.h_list.iter().all(|&h| h > 0.0 && h < 1.0)
            || !self.h_list.windows(2).all(|w| w[1] < w[0])
        {
            return err(format!("h_list must be strictly decreasing in (0, 1), got {:?}", self.h_list));
        }
        if self.load != LoadProfile::Zero && self.sigma != 2.0 * self.alpha() - 2.0 {
            return err(format!(
                "with a load, sigma = 2 alpha - 2 must hold exactly (sigma = {}, alpha = {})",
                self.sigma,
                self.alpha()
            ));
        }
        if self.nx < 4 || self.ny < 4 || self.nz < 2 {
            return err(format!("grid {}x{}x{} is too coarse", self.nx, self.ny, self.nz));
        }
        if !(self.lx > 0.0 && self.ly > 0.0) {
            return err("lx and ly must be positive".into());
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|&d| !(d > 0.0)) {
            return err("deltas must be a nonempty list of positive amplitudes".into());
        }
        if self.samples == 0 {
            return err("samples must be positive".into());
        }
        if let Some(t) = self.grad_tol {
            if !(t > 0.0) {
                return err(format!("grad_tol must be positive, got {t}"));
            }
        }
        Ok(())
    }

    /// Resolved configuration in a fixed key order; the hash is taken over
    /// this text. The output directory is left out so that identical runs in
    /// different directories produce identical files.
    pub fn canonical(&self) -> String {
        let m = &self.material;
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("writing to a String");
        kv("beta", m.beta.to_string());
        kv("mu", m.mu.to_string());
        kv("lambda", m.lambda.to_string());
        kv("c1", m.c1.to_string());
        kv("l", m.l.to_string());
        kv("epsilon", m.epsilon.to_string());
        kv("sigma", self.sigma.to_string());
        kv("alpha", self.alpha().to_string());
        kv("h_list", list(&self.h_list));
        kv("nx", self.nx.to_string());
        kv("ny", self.ny.to_string());
        kv("nz", self.nz.to_string());
        kv("lx", self.lx.to_string());
        kv("ly", self.ly.to_string());
        kv("bc_mode", self.bc_mode.name().into());
        kv("variant", self.variant.name().into());
        kv("state", self.state.name().into());
        kv("load", self.load.name().into());
        kv("amplitude", self.amplitude.to_string());
        kv("seed", self.seed.to_string());
        kv("samples", self.samples.to_string());
        kv("field", self.field.name().into());
        kv("deltas", list(&self.deltas));
        kv("max_iters", self.max_iters.map_or("default".into(), |v| v.to_string()));
        kv("grad_tol", self.grad_tol.map_or("default".into(), |v| v.to_string()));
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
