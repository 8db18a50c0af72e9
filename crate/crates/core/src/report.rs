//! Identification report and plot tables.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::motor::ThrustCurve;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A value or the reason it was not computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate<T> {
    Value(T),
    Skipped(String),
}

impl<T> Estimate<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Estimate::Value(v) => Some(v),
            Estimate::Skipped(_) => None,
        }
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self, Estimate::Skipped(_))
    }

    pub fn skipped(reason: impl Into<String>) -> Self {
        Estimate::Skipped(reason.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub sha256: String,
    pub bytes: usize,
    pub format: String,
    pub samples: usize,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub inputs: Vec<InputDigest>,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorReport {
    pub time_constant_s: f64,
    pub grid_time_constant_s: f64,
    pub thrust_curve: ThrustCurve,
    pub fit_rmse_m_s2: f64,
    pub boundary_hit: bool,
    pub regression_samples: usize,
    pub sweep_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InertiaReport {
    pub ixx_kg_m2: Estimate<f64>,
    pub iyy_kg_m2: Estimate<f64>,
    pub izz_kg_m2: Estimate<f64>,
    pub k_tau: Estimate<f64>,
    /// `izz / k_tau`.
    pub yaw_ratio_kg_m2: Estimate<f64>,
    /// Ratio regressed directly from yaw acceleration.
    pub yaw_ratio_direct_kg_m2: Estimate<f64>,
    pub c_xy_z: f64,
    pub reciprocal: bool,
    pub roll_rmse_rad_s2: Estimate<f64>,
    pub pitch_rmse_rad_s2: Estimate<f64>,
    pub k_tau_rmse_n_m: Estimate<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoverReport {
    pub percentile: f64,
    pub mean_command: [f64; 4],
    pub overall_mean_command: f64,
    pub predicted_hover_command: f64,
    pub selected_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub accel_rmse_m_s2: f64,
    pub angular_accel_rmse_rad_s2: Estimate<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub generated_at: String,
    pub provenance: Provenance,
    pub motor: MotorReport,
    pub inertia: InertiaReport,
    pub hover: Estimate<HoverReport>,
    pub validation: ValidationReport,
    pub warnings: Vec<String>,
}

impl IdentificationReport {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Copy with the generation timestamp blanked, for comparisons.
    pub fn without_timestamp(&self) -> Self {
        IdentificationReport {
            generated_at: String::new(),
            ..self.clone()
        }
    }
}

impl IdentificationReport {
    /// Flat `quantity,value` table of the headline numbers. Skipped estimates
    /// appear with an empty value.
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&["quantity", "value"]);
        let mut push = |name: String, v: Option<f64>| {
            t.rows.push(vec![Cell::Text(name), v.map_or(Cell::Text(String::new()), Cell::Num)]);
        };
        let m = &self.motor;
        push("time_constant_s".into(), Some(m.time_constant_s));
        for (i, k) in m.thrust_curve.coefficients.iter().enumerate() {
            let prefix = if m.thrust_curve.lumped { String::new() } else { format!("motor{}_", i + 1) };
            for (j, v) in k.iter().enumerate() {
                push(format!("{prefix}k{j}_n"), Some(*v));
            }
        }
        push("thrust_fit_rmse_m_s2".into(), Some(m.fit_rmse_m_s2));
        let i = &self.inertia;
        for (name, e) in [
            ("ixx_kg_m2", &i.ixx_kg_m2),
            ("iyy_kg_m2", &i.iyy_kg_m2),
            ("izz_kg_m2", &i.izz_kg_m2),
            ("k_tau", &i.k_tau),
            ("yaw_ratio_kg_m2", &i.yaw_ratio_kg_m2),
            ("yaw_ratio_direct_kg_m2", &i.yaw_ratio_direct_kg_m2),
        ] {
            push(name.into(), e.value().copied());
        }
        let hover = self.hover.value();
        push("predicted_hover_command".into(), hover.map(|h| h.predicted_hover_command));
        push("empirical_hover_command".into(), hover.map(|h| h.overall_mean_command));
        push("validation_accel_rmse_m_s2".into(), Some(self.validation.accel_rmse_m_s2));
        push(
            "validation_angular_accel_rmse_rad_s2".into(),
            self.validation.angular_accel_rmse_rad_s2.value().copied(),
        );
        t
    }
}

/// Table cell: numbers, or text for label columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| Cell::Num(*v)).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Sweep,
    ThrustFit,
    AngularFit,
    HoverHist,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [PlotKind::Sweep, PlotKind::ThrustFit, PlotKind::AngularFit, PlotKind::HoverHist];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Sweep => "sweep",
            PlotKind::ThrustFit => "thrust_fit",
            PlotKind::AngularFit => "angular_fit",
            PlotKind::HoverHist => "hover_hist",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Series behind the report, one table per plot kind when available.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlotData {
    pub sweep: Option<Table>,
    pub thrust_fit: Option<Table>,
    pub angular_fit: Option<Table>,
    pub hover_hist: Option<Table>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("plot series `{0}` is not available for this report")]
pub struct SeriesUnavailable(pub &'static str);

impl PlotData {
    pub fn get(&self, kind: PlotKind) -> Option<&Table> {
        match kind {
            PlotKind::Sweep => self.sweep.as_ref(),
            PlotKind::ThrustFit => self.thrust_fit.as_ref(),
            PlotKind::AngularFit => self.angular_fit.as_ref(),
            PlotKind::HoverHist => self.hover_hist.as_ref(),
        }
    }

    /// CSV export of one series.
    pub fn export(&self, kind: PlotKind) -> Result<String, SeriesUnavailable> {
        self.get(kind).map(Table::to_csv).ok_or(SeriesUnavailable(kind.name()))
    }
}
