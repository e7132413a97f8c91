//! Run configuration: one TOML file drives every pipeline. The schema is
//! versioned and strict (unknown keys are rejected), and a written config
//! re-parses to an equal value.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use bchd_orbit::bchd::SeriesMethod;
use bchd_orbit::flow::{SwitchingSchedule, ToleranceConfig};
use bchd_orbit::models::{builtin_model, parse_model, ControlAffineSystem};
use bchd_orbit::solve::SolverConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const PIPELINE_STAGES: &[&str] = &["series", "find", "certify", "simulate"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelRef,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub series: SeriesConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub find: FindSection,
    #[serde(default)]
    pub certify: CertifySection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelRef {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub tau: f64,
    /// scenario sugar; "symmetric-bang-bang" expands to breakpoints
    /// [0, 1/2, 1] with the upper then lower control vertex
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub run: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            run: PIPELINE_STAGES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeriesConfig {
    pub method: String,
    pub order: usize,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            method: "recursive".into(),
            order: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol_residual: f64,
    pub max_iter: usize,
    pub fd_step_scale: f64,
    pub damping: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::<f64>::default();
        SolverSection {
            tol_residual: d.tol_residual,
            max_iter: d.max_iter,
            fd_step_scale: d.fd_step_scale,
            damping: d.damping,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub rtol: f64,
    pub atol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = ToleranceConfig::<f64>::default();
        IntegratorSection {
            rtol: d.rtol,
            atol: d.atol,
            max_step: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FindSection {
    pub orders: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_guess: Option<Vec<f64>>,
    pub polish: bool,
}

impl Default for FindSection {
    fn default() -> Self {
        FindSection {
            orders: vec![1, 2, 3, 4],
            x_guess: None,
            polish: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CertifySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dulac: Option<DulacSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contraction: Option<ContractionSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DulacSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub grid: Vec<usize>,
    #[serde(default = "default_dulac_orders")]
    pub orders: Vec<usize>,
}

fn default_dulac_orders() -> Vec<usize> {
    vec![2, 3, 4]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionSection {
    /// point where the metric is assembled (Lyapunov solve on the drift
    /// Jacobian with identity right-hand side)
    pub center: Vec<f64>,
    /// per-axis half-widths relative to the center: |x_i - c_i| <= d_i c_i
    pub deltas_rel: Vec<f64>,
    pub grid: Vec<usize>,
    /// margin; bisected automatically when absent
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub starts: Vec<Vec<f64>>,
    pub n_periods: usize,
    pub samples_per_period: usize,
    /// additional periods to sweep; each runs a shooting solve first and
    /// simulates one closed orbit from its fixed point
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orbit_taus: Option<Vec<f64>>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            starts: Vec::new(),
            n_periods: 20,
            samples_per_period: 200,
            orbit_taus: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// recorded in outputs; reserved for randomized scan variants
    pub seed: u64,
    /// rayon worker count; 0 picks the default
    pub threads: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).context("parsing run config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        match (&self.model.builtin, &self.model.file) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => bail!("[model] must set exactly one of `builtin` or `file`"),
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
        if !(self.schedule.tau > 0.0) {
            bail!("[schedule] tau must be positive, got {}", self.schedule.tau);
        }
        match (
            &self.schedule.scenario,
            &self.schedule.breakpoints,
            &self.schedule.controls,
        ) {
            (Some(s), None, None) => {
                if s != "symmetric-bang-bang" {
                    bail!("unknown scenario '{s}' (supported: symmetric-bang-bang)");
                }
            }
            (None, Some(_), Some(_)) => {}
            _ => bail!("[schedule] needs either `scenario` or both `breakpoints` and `controls`"),
        }
        for stage in &self.pipeline.run {
            if !PIPELINE_STAGES.contains(&stage.as_str()) {
                bail!("unknown pipeline stage '{stage}' (choose from {PIPELINE_STAGES:?})");
            }
        }
        if SeriesMethod::parse(&self.series.method).is_none() {
            bail!(
                "unknown series method '{}' (general|appendix|recursive)",
                self.series.method
            );
        }
        if self.find.orders.is_empty() {
            bail!("[find] orders must be nonempty");
        }
        Ok(())
    }

    pub fn load_system(&self) -> Result<ControlAffineSystem<f64>> {
        match (&self.model.builtin, &self.model.file) {
            (Some(name), None) => Ok(builtin_model::<f64>(name)?),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading model file {path}"))?;
                Ok(parse_model::<f64>(&text)?)
            }
            _ => unreachable!("validated"),
        }
    }

    pub fn build_schedule(
        &self,
        system: &ControlAffineSystem<f64>,
    ) -> Result<SwitchingSchedule<f64>> {
        let sched = match &self.schedule.scenario {
            Some(_) => SwitchingSchedule::symmetric_bang_bang(self.schedule.tau, system),
            None => SwitchingSchedule::new(
                self.schedule.tau,
                self.schedule.breakpoints.clone().expect("validated"),
                self.schedule.controls.clone().expect("validated"),
            )?,
        };
        sched.validate_against(system)?;
        Ok(sched)
    }

    pub fn solver_config(&self) -> SolverConfig<f64> {
        SolverConfig {
            tol_residual: self.solver.tol_residual,
            max_iter: self.solver.max_iter,
            fd_step_scale: self.solver.fd_step_scale,
            damping: self.solver.damping,
            ..Default::default()
        }
    }

    pub fn tolerance_config(&self) -> ToleranceConfig<f64> {
        ToleranceConfig {
            rtol: self.integrator.rtol,
            atol: self.integrator.atol,
            max_step: self.integrator.max_step,
            ..Default::default()
        }
    }

    pub fn series_method(&self) -> SeriesMethod {
        SeriesMethod::parse(&self.series.method).expect("validated")
    }
}
