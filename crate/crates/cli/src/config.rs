//! Run-configuration files: flat `section.key = value` text with `#`
//! comments. Every effective setting (after defaults) can be serialized back
//! with [`RunConfig::echo`], and the echo parses to an equal configuration —
//! this is what checkpoints embed.

use std::collections::BTreeMap;

use dfpo_core::dynamics::ScoreForm;
use dfpo_core::envs::{Env, EnvKind};
use dfpo_core::linalg::SpdMatrix;
use dfpo_core::net::Activation;
use dfpo_core::trainer::{make_schedule, NetConfig, OptConfig, ScheduleMode, StageSchedule};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing required field `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown configuration key `{0}`")]
    Unknown(String),
    #[error("field `{field}` does not apply to the {kind} environment")]
    NotApplicable { field: String, kind: &'static str },
    #[error("malformed line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("duplicate key `{0}`")]
    Duplicate(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), reason: reason.into() }
}

/// Stage-schedule selection as written in a config file.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSpec {
    Budget { total_episodes: usize },
    /// `input_dim` defaults to the environment's phase dimension.
    TheoryGeneral { epsilon: f64, constant: f64, input_dim: Option<usize> },
    TheorySpecial { epsilon: f64, constant: f64 },
}

/// A fully resolved run configuration (file values merged with per-kind
/// defaults).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: EnvKind,
    /// Surface: number of spline control points.
    pub control_points: usize,
    /// Grid: coarse side length m and refinement factor.
    pub coarse_side: usize,
    pub fine_factor: usize,
    /// Quadratic: state dimension and optional SPD diagonal (identity when
    /// absent).
    pub state_dim: usize,
    pub matrix_diag: Option<Vec<f64>>,
    pub steps: usize,
    pub dt: f64,
    pub score_form: ScoreForm,
    pub schedule: ScheduleSpec,
    pub delta: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init_scale: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub plateau_tol: f64,
    pub loss_beta: f64,
    pub weight_bound: Option<f64>,
    pub seed: u64,
    pub out_dir: String,
}

/// Raw key-value view of a config file with consumed-key tracking.
struct Fields {
    map: BTreeMap<String, String>,
}

impl Fields {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Malformed { line: idx + 1 })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Malformed { line: idx + 1 });
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(ConfigError::Duplicate(key));
            }
        }
        Ok(Fields { map })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.map.into_keys().next() {
            Some(key) => Err(ConfigError::Unknown(key)),
            None => Ok(()),
        }
    }
}

fn parse_num<T: std::str::FromStr>(field: &'static str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| invalid(field, format!("{e}")))
}

fn parse_list<T: std::str::FromStr>(field: &'static str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|part| part.trim().parse().map_err(|e| invalid(field, format!("`{}`: {e}", part.trim()))))
        .collect()
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl RunConfig {
    /// Parse a configuration file, applying per-kind defaults. Surface and
    /// grid default to the benchmark settings (5000 episodes, 20 steps,
    /// dt = 0.01); the quadratic environment requires steps, dt, and the
    /// schedule to be set explicitly.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut fields = Fields::parse(text)?;

        let kind_text = fields.take("env.kind").ok_or(ConfigError::Missing("env.kind"))?;
        let kind = EnvKind::parse(&kind_text)
            .ok_or_else(|| invalid("env.kind", format!("`{kind_text}` is not surface, grid, or quadratic")))?;
        let benchmark = matches!(kind, EnvKind::Surface | EnvKind::Grid);

        let take_for = |field: &'static str, applies: bool, fields: &mut Fields| -> Result<Option<String>, ConfigError> {
            match fields.take(field) {
                Some(v) if applies => Ok(Some(v)),
                Some(_) => Err(ConfigError::NotApplicable { field: field.to_string(), kind: kind.name() }),
                None => Ok(None),
            }
        };

        let control_points = match take_for("env.control_points", kind == EnvKind::Surface, &mut fields)? {
            Some(v) => parse_num("env.control_points", &v)?,
            None => 64,
        };
        let coarse_side = match take_for("env.coarse_side", kind == EnvKind::Grid, &mut fields)? {
            Some(v) => parse_num("env.coarse_side", &v)?,
            None => 25,
        };
        let fine_factor = match take_for("env.fine_factor", kind == EnvKind::Grid, &mut fields)? {
            Some(v) => parse_num("env.fine_factor", &v)?,
            None => 4,
        };
        let matrix_diag = match take_for("env.matrix_diag", kind == EnvKind::Quadratic, &mut fields)? {
            Some(v) => Some(parse_list::<f64>("env.matrix_diag", &v)?),
            None => None,
        };
        let state_dim = match take_for("env.state_dim", kind == EnvKind::Quadratic, &mut fields)? {
            Some(v) => {
                let dim: usize = parse_num("env.state_dim", &v)?;
                if let Some(diag) = &matrix_diag {
                    if diag.len() != dim {
                        return Err(invalid(
                            "env.state_dim",
                            format!("{} entries in env.matrix_diag but state_dim = {dim}", diag.len()),
                        ));
                    }
                }
                dim
            }
            None => matrix_diag.as_ref().map_or(2, Vec::len),
        };

        let steps = match fields.take("env.steps") {
            Some(v) => parse_num("env.steps", &v)?,
            None if benchmark => 20,
            None => return Err(ConfigError::Missing("env.steps")),
        };
        if steps < 2 {
            return Err(invalid("env.steps", "training needs at least 2 steps per episode"));
        }
        let dt = match fields.take("env.dt") {
            Some(v) => parse_num("env.dt", &v)?,
            None if benchmark => 0.01,
            None => return Err(ConfigError::Missing("env.dt")),
        };
        let score_form = match fields.take("env.score_form") {
            Some(v) => ScoreForm::parse(&v)
                .ok_or_else(|| invalid("env.score_form", format!("`{v}` is not legendre or cost_only")))?,
            None => ScoreForm::Legendre,
        };

        let mode_text = fields.take("schedule.mode").unwrap_or_else(|| "budget".to_string());
        let schedule = match mode_text.as_str() {
            "budget" => {
                let total = match fields.take("schedule.total_episodes") {
                    Some(v) => parse_num("schedule.total_episodes", &v)?,
                    None if benchmark => 5000,
                    None => return Err(ConfigError::Missing("schedule.total_episodes")),
                };
                ScheduleSpec::Budget { total_episodes: total }
            }
            "theory_general" | "theory_special" => {
                let epsilon = fields
                    .take("schedule.epsilon")
                    .ok_or(ConfigError::Missing("schedule.epsilon"))
                    .and_then(|v| parse_num("schedule.epsilon", &v))?;
                let constant = match fields.take("schedule.constant") {
                    Some(v) => parse_num("schedule.constant", &v)?,
                    None => 1.0,
                };
                if mode_text == "theory_general" {
                    let input_dim = match fields.take("schedule.input_dim") {
                        Some(v) => Some(parse_num("schedule.input_dim", &v)?),
                        None => None,
                    };
                    ScheduleSpec::TheoryGeneral { epsilon, constant, input_dim }
                } else {
                    ScheduleSpec::TheorySpecial { epsilon, constant }
                }
            }
            other => {
                return Err(invalid(
                    "schedule.mode",
                    format!("`{other}` is not budget, theory_general, or theory_special"),
                ))
            }
        };
        let delta = match fields.take("schedule.delta") {
            Some(v) => parse_num("schedule.delta", &v)?,
            None => 0.05,
        };

        let hidden = match fields.take("net.hidden") {
            Some(v) => parse_list("net.hidden", &v)?,
            None => vec![64, 64],
        };
        let activation = match fields.take("net.activation") {
            Some(v) => Activation::parse(&v)
                .ok_or_else(|| invalid("net.activation", format!("`{v}` is not tanh or softplus")))?,
            None => Activation::Tanh,
        };
        let init_scale = match fields.take("net.init_scale") {
            Some(v) => parse_num("net.init_scale", &v)?,
            None => 1e-2,
        };

        let opt_defaults = OptConfig::default();
        let learning_rate = match fields.take("optimizer.learning_rate") {
            Some(v) => parse_num("optimizer.learning_rate", &v)?,
            None => opt_defaults.learning_rate,
        };
        let batch_size = match fields.take("optimizer.batch_size") {
            Some(v) => parse_num("optimizer.batch_size", &v)?,
            None => opt_defaults.batch_size,
        };
        let epochs = match fields.take("optimizer.epochs") {
            Some(v) => parse_num("optimizer.epochs", &v)?,
            None => opt_defaults.epochs,
        };
        let plateau_tol = match fields.take("optimizer.plateau_tol") {
            Some(v) => parse_num("optimizer.plateau_tol", &v)?,
            None => opt_defaults.plateau_tol,
        };
        let loss_beta = match fields.take("optimizer.loss_beta") {
            Some(v) => parse_num("optimizer.loss_beta", &v)?,
            None => opt_defaults.loss_beta,
        };
        let weight_bound = match fields.take("optimizer.weight_bound") {
            Some(v) => Some(parse_num("optimizer.weight_bound", &v)?),
            None => None,
        };

        let seed = match fields.take("run.seed") {
            Some(v) => parse_num("run.seed", &v)?,
            None => 0,
        };
        let out_dir = fields.take("run.out_dir").unwrap_or_else(|| "runs".to_string());

        fields.finish()?;

        let config = RunConfig {
            kind,
            control_points,
            coarse_side,
            fine_factor,
            state_dim,
            matrix_diag,
            steps,
            dt,
            score_form,
            schedule,
            delta,
            hidden,
            activation,
            init_scale,
            learning_rate,
            batch_size,
            epochs,
            plateau_tol,
            loss_beta,
            weight_bound,
            seed,
            out_dir,
        };
        config.build_env()?; // surface every env-level validation error now
        Ok(config)
    }

    /// Serialize every effective setting as config text; `parse(echo())`
    /// yields an equal configuration.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("env.kind", self.kind.name().to_string());
        match self.kind {
            EnvKind::Surface => put("env.control_points", self.control_points.to_string()),
            EnvKind::Grid => {
                put("env.coarse_side", self.coarse_side.to_string());
                put("env.fine_factor", self.fine_factor.to_string());
            }
            EnvKind::Quadratic => {
                put("env.state_dim", self.state_dim.to_string());
                if let Some(diag) = &self.matrix_diag {
                    let list: Vec<String> = diag.iter().map(|v| fmt_float(*v)).collect();
                    put("env.matrix_diag", list.join(","));
                }
            }
        }
        put("env.steps", self.steps.to_string());
        put("env.dt", fmt_float(self.dt));
        put("env.score_form", self.score_form.name().to_string());
        match &self.schedule {
            ScheduleSpec::Budget { total_episodes } => {
                put("schedule.mode", "budget".to_string());
                put("schedule.total_episodes", total_episodes.to_string());
            }
            ScheduleSpec::TheoryGeneral { epsilon, constant, input_dim } => {
                put("schedule.mode", "theory_general".to_string());
                put("schedule.epsilon", fmt_float(*epsilon));
                put("schedule.constant", fmt_float(*constant));
                if let Some(dim) = input_dim {
                    put("schedule.input_dim", dim.to_string());
                }
            }
            ScheduleSpec::TheorySpecial { epsilon, constant } => {
                put("schedule.mode", "theory_special".to_string());
                put("schedule.epsilon", fmt_float(*epsilon));
                put("schedule.constant", fmt_float(*constant));
            }
        }
        put("schedule.delta", fmt_float(self.delta));
        let hidden: Vec<String> = self.hidden.iter().map(|w| w.to_string()).collect();
        put("net.hidden", hidden.join(","));
        put("net.activation", self.activation.name().to_string());
        put("net.init_scale", fmt_float(self.init_scale));
        put("optimizer.learning_rate", fmt_float(self.learning_rate));
        put("optimizer.batch_size", self.batch_size.to_string());
        put("optimizer.epochs", self.epochs.to_string());
        put("optimizer.plateau_tol", fmt_float(self.plateau_tol));
        put("optimizer.loss_beta", fmt_float(self.loss_beta));
        if let Some(bound) = self.weight_bound {
            put("optimizer.weight_bound", fmt_float(bound));
        }
        put("run.seed", self.seed.to_string());
        put("run.out_dir", self.out_dir.clone());
        out
    }

    pub fn build_env(&self) -> Result<Env, ConfigError> {
        let env = match self.kind {
            EnvKind::Surface => Env::surface(self.control_points, self.steps, self.dt, self.score_form),
            EnvKind::Grid => {
                Env::grid(self.coarse_side, self.fine_factor, self.steps, self.dt, self.score_form)
            }
            EnvKind::Quadratic => {
                let matrix = match &self.matrix_diag {
                    Some(diag) => SpdMatrix::diagonal(diag)
                        .map_err(|e| invalid("env.matrix_diag", e.to_string()))?,
                    None => SpdMatrix::identity(self.state_dim),
                };
                Env::quadratic(matrix, self.steps, self.dt, self.score_form)
            }
        };
        env.map_err(|e| invalid("env", e.to_string()))
    }

    pub fn build_schedule(&self, env: &Env) -> Result<StageSchedule, ConfigError> {
        let mode = match &self.schedule {
            ScheduleSpec::Budget { total_episodes } => {
                ScheduleMode::Budget { total_episodes: *total_episodes }
            }
            ScheduleSpec::TheoryGeneral { epsilon, constant, input_dim } => ScheduleMode::TheoryGeneral {
                epsilon: *epsilon,
                constant: *constant,
                input_dim: input_dim.unwrap_or_else(|| env.phase_dim()),
            },
            ScheduleSpec::TheorySpecial { epsilon, constant } => {
                ScheduleMode::TheorySpecial { epsilon: *epsilon, constant: *constant }
            }
        };
        make_schedule(mode, self.steps, self.delta)
            .map_err(|e| invalid("schedule", e.to_string()))
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            hidden: self.hidden.clone(),
            activation: self.activation,
            init_scale: self.init_scale,
        }
    }

    pub fn opt_config(&self) -> OptConfig {
        OptConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            plateau_tol: self.plateau_tol,
            loss_beta: self.loss_beta,
            weight_bound: self.weight_bound,
        }
    }
}
