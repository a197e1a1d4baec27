//! Experiment configuration: `key = value` text with `#` comments.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gradcode_core::analysis::Method;
use gradcode_core::codes::CodeParams;
use gradcode_core::optim::{Loss, StepPolicy};
use gradcode_core::simulator::{agc_threshold, DelaySource, Init, RunSpec, WaitPolicy};
use sha2::{Digest, Sha256};

/// A config problem, naming the offending key.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid config: {field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaPolicy {
    InvBeta,
    ScaledInvBeta,
    Schedule,
}

impl GammaPolicy {
    fn name(self) -> &'static str {
        match self {
            GammaPolicy::InvBeta => "inv_beta",
            GammaPolicy::ScaledInvBeta => "scaled_inv_beta",
            GammaPolicy::Schedule => "schedule",
        }
    }
}

impl FromStr for GammaPolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "inv_beta" => Ok(GammaPolicy::InvBeta),
            "scaled_inv_beta" => Ok(GammaPolicy::ScaledInvBeta),
            "schedule" => Ok(GammaPolicy::Schedule),
            _ => Err(format!(
                "unknown step policy '{s}' (inv_beta, scaled_inv_beta, schedule)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayKind {
    /// `c/n + Exp(lambda n / c)`
    ShiftedExponential,
    /// `c * task_cost + Exp(lambda)`
    Injected,
    /// Per-round times read from `delay_table`.
    Table,
}

impl DelayKind {
    fn name(self) -> &'static str {
        match self {
            DelayKind::ShiftedExponential => "shifted_exponential",
            DelayKind::Injected => "injected",
            DelayKind::Table => "table",
        }
    }
}

impl FromStr for DelayKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "shifted_exponential" => Ok(DelayKind::ShiftedExponential),
            "injected" => Ok(DelayKind::Injected),
            "table" => Ok(DelayKind::Table),
            _ => Err(format!(
                "unknown delay model '{s}' (shifted_exponential, injected, table)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    /// Generated quadratic; see [`gradcode_core::optim::QuadraticConfig`].
    Quadratic {
        dim: usize,
        conditioning: f64,
        noise: f64,
        shared_design: bool,
        sigma_radius: Option<f64>,
        objective_seed: u64,
    },
    /// Least squares or logistic regression on a CSV file.
    Dataset {
        loss: Loss,
        path: PathBuf,
        label_column: String,
        standardize: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub n: usize,
    pub k: usize,
    pub c: usize,
    pub delta: Option<f64>,
    pub iterations: u64,
    pub seed: u64,
    pub gamma_policy: GammaPolicy,
    pub gamma0: Option<f64>,
    pub rho: Option<f64>,
    pub debias: bool,
    pub delay: DelayKind,
    pub lambda: f64,
    pub task_cost: Option<f64>,
    pub delay_table: Option<PathBuf>,
    pub objective: ObjectiveSpec,
    pub init_scale: f64,
    /// Seconds the master waits for any message before aborting.
    pub timeout: f64,
    pub output: Option<PathBuf>,
}

struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(i) => &line[..i],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::new(line, format!("line {}: expected key = value", no + 1)));
            };
            let key = key.trim().to_string();
            if key == "policy" && map.contains_key("method") || key == "method" && map.contains_key("policy") {
                return Err(ConfigError::new("method", "both 'method' and 'policy' given"));
            }
            if map.insert(key.clone(), (value.trim().to_string(), no + 1)).is_some() {
                return Err(ConfigError::new(&key, format!("line {}: duplicate key", no + 1)));
            }
        }
        if let Some(v) = map.remove("policy") {
            map.insert("method".into(), v);
        }
        Ok(Self { map })
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| ConfigError::new(key, format!("line {line}: cannot parse '{v}': {e}"))),
        }
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.take(key)?
            .ok_or_else(|| ConfigError::new(key, "missing required key"))
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().next() {
            Some((key, (_, line))) => Err(ConfigError::new(&key, format!("line {line}: unknown key"))),
            None => Ok(()),
        }
    }
}

fn parse_loss(s: &str) -> Option<Loss> {
    match s {
        "least_squares" => Some(Loss::LeastSquares),
        "logistic" => Some(Loss::Logistic),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let method: String = e.require("method")?;
        let method: Method = method
            .parse()
            .map_err(|err: gradcode_core::Error| ConfigError::new("method", err.to_string()))?;
        let n: usize = e.require("n")?;
        let k: usize = e.take("k")?.unwrap_or(n);
        let c: usize = e.take("c")?.unwrap_or(1);
        let delta: Option<f64> = e.take("delta")?;
        let iterations: u64 = e.require("T")?;
        let seed: u64 = e.take("seed")?.unwrap_or(0);
        let gamma_policy: GammaPolicy = e.take("gamma_policy")?.unwrap_or(match method {
            Method::Agc => GammaPolicy::ScaledInvBeta,
            _ => GammaPolicy::InvBeta,
        });
        let gamma0 = e.take("gamma0")?;
        let rho = e.take("rho")?;
        let debias = e.take("debias")?.unwrap_or(method == Method::Agc);
        let delay = e.take("delay")?.unwrap_or(DelayKind::ShiftedExponential);
        let lambda = e.take("lambda")?.unwrap_or(1.0);
        let task_cost = e.take("task_cost")?;
        let delay_table = e.take("delay_table")?;
        let kind: String = e.take("objective")?.unwrap_or_else(|| "quadratic".into());
        let objective = if kind == "quadratic" {
            ObjectiveSpec::Quadratic {
                dim: e.take("dim")?.unwrap_or(10),
                conditioning: e.take("conditioning")?.unwrap_or(10.0),
                noise: e.take("noise")?.unwrap_or(0.1),
                shared_design: e.take("shared_design")?.unwrap_or(false),
                sigma_radius: e.take("sigma_radius")?,
                objective_seed: e.take("objective_seed")?.unwrap_or(0),
            }
        } else if let Some(loss) = parse_loss(&kind) {
            ObjectiveSpec::Dataset {
                loss,
                path: e.require("dataset")?,
                label_column: e.take("label_column")?.unwrap_or_else(|| "label".into()),
                standardize: e.take("standardize")?.unwrap_or(false),
            }
        } else {
            return Err(ConfigError::new(
                "objective",
                format!("unknown objective '{kind}' (quadratic, least_squares, logistic)"),
            ));
        };
        let init_scale = e.take("init_scale")?.unwrap_or(0.0);
        let timeout = e.take("timeout")?.unwrap_or(60.0);
        let output = e.take("output")?;
        e.finish()?;
        let cfg = Self {
            method,
            n,
            k,
            c,
            delta,
            iterations,
            seed,
            gamma_policy,
            gamma0,
            rho,
            debias,
            delay,
            lambda,
            task_cost,
            delay_table,
            objective,
            init_scale,
            timeout,
            output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::Error::file(format!("reading config {}", path.display()), e))?;
        Ok(Self::parse(&text)?)
    }

    /// Cross-field checks; run by [`ExperimentConfig::parse`].
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(ConfigError::new("n", "must be positive"));
        }
        if self.k == 0 {
            return Err(ConfigError::new("k", "must be positive"));
        }
        if self.c == 0 || self.c > self.n || self.n % self.c != 0 {
            return Err(ConfigError::new("c", format!("must divide n = {}", self.n)));
        }
        if (self.k * self.c) % self.n != 0 {
            return Err(ConfigError::new(
                "k",
                format!("n = {} must divide k*c = {}", self.n, self.k * self.c),
            ));
        }
        match (self.method, self.delta) {
            (Method::Agc, None) => return Err(ConfigError::new("delta", "required for agc")),
            (_, Some(d)) if !(d > 0.0 && d <= 1.0) => {
                return Err(ConfigError::new("delta", format!("must lie in (0, 1], got {d}")))
            }
            _ => {}
        }
        if self.method == Method::Uncoded && (self.c != 1 || self.k != self.n) {
            return Err(ConfigError::new("c", "uncoded needs c = 1 and k = n"));
        }
        if self.gamma_policy == GammaPolicy::Schedule {
            match (self.gamma0, self.rho) {
                (Some(g), Some(r)) if g > 0.0 && r > 0.0 => {}
                (None, _) => return Err(ConfigError::new("gamma0", "required for the schedule step policy")),
                (_, None) => return Err(ConfigError::new("rho", "required for the schedule step policy")),
                _ => return Err(ConfigError::new("gamma0", "gamma0 and rho must be positive")),
            }
        }
        if !(self.lambda > 0.0) {
            return Err(ConfigError::new("lambda", "must be positive"));
        }
        if let Some(t) = self.task_cost {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(ConfigError::new("task_cost", "must be finite and non-negative"));
            }
        }
        if self.delay == DelayKind::Table && self.delay_table.is_none() {
            return Err(ConfigError::new("delay_table", "required when delay = table"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(ConfigError::new("init_scale", "must be finite and non-negative"));
        }
        if !(self.timeout > 0.0) {
            return Err(ConfigError::new("timeout", "must be positive"));
        }
        if let ObjectiveSpec::Quadratic {
            dim,
            conditioning,
            noise,
            sigma_radius,
            ..
        } = &self.objective
        {
            if *dim == 0 {
                return Err(ConfigError::new("dim", "must be positive"));
            }
            if !(conditioning.is_finite() && *conditioning >= 1.0) {
                return Err(ConfigError::new("conditioning", "must be finite and at least 1"));
            }
            if !(noise.is_finite() && *noise >= 0.0) {
                return Err(ConfigError::new("noise", "must be finite and non-negative"));
            }
            if let Some(r) = sigma_radius {
                if !(*r >= 0.0) {
                    return Err(ConfigError::new("sigma_radius", "must be non-negative"));
                }
            }
        }
        Ok(())
    }

    /// Canonical text form; [`ExperimentConfig::parse`] inverts it.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("method", &self.method.name());
        put("n", &self.n);
        put("k", &self.k);
        put("c", &self.c);
        if let Some(d) = self.delta {
            put("delta", &d);
        }
        put("T", &self.iterations);
        put("seed", &self.seed);
        put("gamma_policy", &self.gamma_policy.name());
        if let Some(g) = self.gamma0 {
            put("gamma0", &g);
        }
        if let Some(r) = self.rho {
            put("rho", &r);
        }
        put("debias", &self.debias);
        put("delay", &self.delay.name());
        put("lambda", &self.lambda);
        if let Some(t) = self.task_cost {
            put("task_cost", &t);
        }
        if let Some(p) = &self.delay_table {
            put("delay_table", &p.display());
        }
        match &self.objective {
            ObjectiveSpec::Quadratic {
                dim,
                conditioning,
                noise,
                shared_design,
                sigma_radius,
                objective_seed,
            } => {
                put("objective", &"quadratic");
                put("dim", dim);
                put("conditioning", conditioning);
                put("noise", noise);
                put("shared_design", shared_design);
                if let Some(r) = sigma_radius {
                    put("sigma_radius", r);
                }
                put("objective_seed", objective_seed);
            }
            ObjectiveSpec::Dataset {
                loss,
                path,
                label_column,
                standardize,
            } => {
                let name = match loss {
                    Loss::LeastSquares => "least_squares",
                    Loss::Logistic => "logistic",
                };
                put("objective", &name);
                put("dataset", &path.display());
                put("label_column", label_column);
                put("standardize", standardize);
            }
        }
        put("init_scale", &self.init_scale);
        put("timeout", &self.timeout);
        if let Some(o) = &self.output {
            put("output", &o.display());
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.serialize().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn params(&self) -> crate::Result<CodeParams> {
        Ok(CodeParams::new(self.n, self.k, self.c)?)
    }

    pub fn wait_policy(&self) -> WaitPolicy {
        WaitPolicy::for_method(self.method, self.delta.unwrap_or(1.0))
    }

    /// Non-straggler threshold `ceil(delta k)` (k for exact methods).
    pub fn threshold(&self) -> usize {
        match self.method {
            Method::Agc => agc_threshold(self.delta.unwrap_or(1.0), self.k),
            _ => self.k,
        }
    }

    pub fn step_policy(&self) -> StepPolicy {
        match self.gamma_policy {
            GammaPolicy::InvBeta => StepPolicy::InvBeta,
            GammaPolicy::ScaledInvBeta => StepPolicy::ScaledInvBeta,
            GammaPolicy::Schedule => StepPolicy::Schedule {
                gamma0: self.gamma0.unwrap_or(0.1),
                rho: self.rho.unwrap_or(1.0),
            },
        }
    }

    pub fn delay_source(&self) -> crate::Result<DelaySource> {
        Ok(match self.delay {
            DelayKind::ShiftedExponential => DelaySource::ShiftedExponential { lambda: self.lambda },
            DelayKind::Injected => DelaySource::Injected {
                lambda: self.lambda,
                task_cost: self.task_cost.unwrap_or(1.0 / self.n as f64),
            },
            DelayKind::Table => {
                let path = self.delay_table.as_ref().expect("validated");
                DelaySource::Table(crate::data::load_delay_table(path)?)
            }
        })
    }

    pub fn init(&self) -> Init {
        if self.init_scale == 0.0 {
            Init::Zeros
        } else {
            Init::Gaussian { scale: self.init_scale }
        }
    }

    /// Simulator spec for one seed.
    pub fn run_spec(&self, seed: u64) -> crate::Result<RunSpec> {
        Ok(RunSpec {
            params: self.params()?,
            policy: self.wait_policy(),
            delays: self.delay_source()?,
            step: self.step_policy(),
            debias: self.debias,
            iterations: self.iterations,
            seed,
            init: self.init(),
        })
    }
}
