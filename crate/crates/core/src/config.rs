//! Run configuration: JSON on disk, dotted `key=value` overrides, validation before compute.

use crate::error::{Error, Result};
use crate::immersion::MeshFormat;
use crate::inner::PhiOptions;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureConfig {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Inner x-cells (staggered) and t-nodes.
    pub n_x: usize,
    pub n_t: usize,
    /// θ-rays of the polar metric and σ-cells of the outer march.
    pub n_theta: usize,
    pub n_sigma: usize,
    /// ρ-nodes of the polar metric on [0, polar_extent].
    pub n_rho: usize,
    pub polar_extent: f64,
    /// End of the outer march (clipped to the traced boundary).
    pub rho_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n_x: 96, n_t: 500, n_theta: 32, n_sigma: 128, n_rho: 20001, polar_extent: 200.0, rho_max: 59.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub cfl: f64,
    pub inner_cfl: f64,
    pub max_step: f64,
    pub picard: bool,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub enforce_apriori: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            cfl: 0.9,
            inner_cfl: 0.9,
            max_step: 0.05,
            picard: false,
            picard_tol: 1e-12,
            picard_max_iter: 5,
            enforce_apriori: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub quad_tol: f64,
    pub bv_tol: f64,
    pub bound_cap: f64,
    pub metric_step: f64,
    pub chart_step: f64,
    pub chart_floor: f64,
    pub frame_step: f64,
    pub drift_tol: f64,
    pub gronwall_tol: f64,
    pub gronwall_floor: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            quad_tol: 1e-9,
            bv_tol: 1e-3,
            bound_cap: 1e8,
            metric_step: 0.0025,
            chart_step: 0.005,
            chart_floor: 1e-3,
            frame_step: 2e-3,
            drift_tol: 1e-4,
            gronwall_tol: 1e-12,
            gronwall_floor: 1e-14,
        }
    }
}

/// Patch of the geodesic chart handed to the frame integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchConfig {
    pub half_width: f64,
    pub height: f64,
    pub nodes: usize,
    pub format: MeshFormat,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig { half_width: 0.5, height: 0.8, nodes: 21, format: MeshFormat::Obj }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub curvature: CurvatureConfig,
    pub gamma: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub phi: PhiOptions,
    #[serde(default)]
    pub patch: PatchConfig,
    /// Output directory; `--out` wins over this.
    #[serde(default = "default_out")]
    pub out: String,
    /// Artifacts carry no timestamps or timings when set.
    #[serde(default = "yes")]
    pub deterministic: bool,
}

fn default_out() -> String {
    "out".into()
}

fn yes() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            curvature: CurvatureConfig {
                family: "oscillating_log_power".into(),
                params: BTreeMap::from([("scale".to_string(), 0.05)]),
            },
            gamma: 0.5,
            r: 2.0,
            grids: GridConfig::default(),
            scheme: SchemeConfig::default(),
            tolerances: ToleranceConfig::default(),
            phi: PhiOptions::default(),
            patch: PatchConfig::default(),
            out: default_out(),
            deterministic: true,
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `a.b.c=value`; the value is read as JSON, falling back to a bare string.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, raw) = spec.split_once('=').ok_or_else(|| bad(format!("override `{spec}` is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut root = serde_json::to_value(&*self).map_err(|e| bad(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = &mut root;
        for (i, part) in parts.iter().enumerate() {
            let obj = node.as_object_mut().ok_or_else(|| bad(format!("`{key}`: `{part}` is not inside an object")))?;
            // family parameters are an open map, everything else must already exist
            let open = i > 0 && parts[i - 1] == "params";
            if !open && !obj.contains_key(*part) {
                return Err(bad(format!("unknown key `{key}`")));
            }
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj.get_mut(*part).expect("checked above");
        }
        *self = serde_json::from_value(root).map_err(|e| bad(format!("`{key}`: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grids;
        for (name, n) in [
            ("grids.n_x", g.n_x),
            ("grids.n_t", g.n_t),
            ("grids.n_theta", g.n_theta),
            ("grids.n_sigma", g.n_sigma),
            ("grids.n_rho", g.n_rho),
            ("patch.nodes", self.patch.nodes),
        ] {
            if n < 8 {
                return Err(bad(format!("{name} = {n}, counts must be at least 8")));
            }
        }
        for (name, c) in [("scheme.cfl", self.scheme.cfl), ("scheme.inner_cfl", self.scheme.inner_cfl)] {
            if !(c > 0.0 && c <= 0.95) {
                return Err(bad(format!("{name} = {c} outside (0, 0.95]")));
            }
        }
        if !(self.r > 0.0) {
            return Err(bad("R must be positive"));
        }
        if !(self.gamma > 0.0) {
            return Err(bad("gamma must be positive"));
        }
        if !(g.rho_max > 2.0 * self.r) {
            return Err(bad(format!("grids.rho_max = {} must exceed 2R = {}", g.rho_max, 2.0 * self.r)));
        }
        if !(g.polar_extent > g.rho_max) {
            return Err(bad("grids.polar_extent must exceed grids.rho_max"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.quad_tol", t.quad_tol),
            ("tolerances.metric_step", t.metric_step),
            ("tolerances.chart_step", t.chart_step),
            ("tolerances.chart_floor", t.chart_floor),
            ("tolerances.frame_step", t.frame_step),
            ("tolerances.drift_tol", t.drift_tol),
            ("scheme.max_step", self.scheme.max_step),
            ("patch.half_width", self.patch.half_width),
            ("patch.height", self.patch.height),
        ] {
            if !(v > 0.0) {
                return Err(bad(format!("{name} must be positive")));
            }
        }
        if self.curvature.params.contains_key("gamma") {
            return Err(bad("set gamma at the top level, not under curvature.params"));
        }
        Ok(())
    }

    /// Family parameters with `gamma` merged in, as the family constructor expects.
    pub fn family_params(&self) -> BTreeMap<String, f64> {
        let mut p = self.curvature.params.clone();
        p.insert("gamma".into(), self.gamma);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back);
        c.validate().unwrap();
    }

    #[test]
    fn minimal_json_fills_defaults() {
        let c = RunConfig::from_json(r#"{"curvature":{"family":"constant"},"gamma":0.5,"R":2}"#).unwrap();
        assert_eq!(c.grids, GridConfig::default());
        assert_eq!(c.out, "out");
    }

    #[test]
    fn overrides() {
        let mut c = RunConfig::default();
        c.apply_override("grids.n_x=192").unwrap();
        c.apply_override("scheme.picard=true").unwrap();
        c.apply_override("curvature.family=pure_power").unwrap();
        c.apply_override("curvature.params.eta=0.2").unwrap();
        c.apply_override("R=3").unwrap();
        assert_eq!(c.grids.n_x, 192);
        assert!(c.scheme.picard);
        assert_eq!(c.curvature.family, "pure_power");
        assert_eq!(c.curvature.params["eta"], 0.2);
        assert_eq!(c.r, 3.0);
        assert!(c.apply_override("grids.nx=1").is_err());
        assert!(c.apply_override("grids.n_x=-1").is_err());
        assert!(c.apply_override("noequals").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        c.scheme.cfl = 2.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.grids.n_theta = 4;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.grids.rho_max = 3.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.curvature.params.insert("gamma".into(), 0.3);
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(RunConfig::from_json(r#"{"curvature":{"family":"constant"},"gamma":0.5,"R":2,"bogus":1}"#).is_err());
    }
}
