//! Config and instance files, CSV output.
//!
//! A config file is flat TOML whose keys are the [`ScenarioConfig`] field
//! names, except that the noise floor is given as `noise_dbm` and converted
//! to watts on load. Solver knobs go in an optional `[solver]` table. An
//! instance file is a config file plus `[channels]` (normalized gains) and
//! `[harvests]` tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dbm_to_watts, watts_to_dbm, ChannelRealization, HarvestRealization, Instance, ScenarioConfig};
use crate::optimizer::SolverSettings;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub n_slots: usize,
    pub theta_p: f64,
    pub theta_s: f64,
    pub e_p_amount: f64,
    pub e_s_amount: f64,
    pub b_max: f64,
    pub alpha: f64,
    pub noise_dbm: f64,
    pub d_pp: f64,
    pub d_sp: f64,
    pub d_ss: f64,
    pub d_pt_st: f64,
    pub rho: f64,
    pub rs_bar: f64,
    pub solver: SolverSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channels: Option<ChannelRealization>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub harvests: Option<HarvestRealization>,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self::from_config(&ScenarioConfig::default())
    }
}

impl ConfigFile {
    pub fn from_config(c: &ScenarioConfig) -> Self {
        Self {
            n_slots: c.n_slots,
            theta_p: c.theta_p,
            theta_s: c.theta_s,
            e_p_amount: c.e_p_amount,
            e_s_amount: c.e_s_amount,
            b_max: c.b_max,
            alpha: c.alpha,
            noise_dbm: watts_to_dbm(c.noise_power),
            d_pp: c.d_pp,
            d_sp: c.d_sp,
            d_ss: c.d_ss,
            d_pt_st: c.d_pt_st,
            rho: c.rho,
            rs_bar: c.rs_bar,
            solver: c.solver.clone(),
            channels: None,
            harvests: None,
        }
    }

    pub fn from_instance(inst: &Instance) -> Self {
        Self {
            channels: Some(inst.channels.clone()),
            harvests: Some(inst.harvests.clone()),
            ..Self::from_config(&inst.config)
        }
    }

    pub fn config(&self) -> ScenarioConfig {
        ScenarioConfig {
            n_slots: self.n_slots,
            theta_p: self.theta_p,
            theta_s: self.theta_s,
            e_p_amount: self.e_p_amount,
            e_s_amount: self.e_s_amount,
            b_max: self.b_max,
            alpha: self.alpha,
            noise_power: dbm_to_watts(self.noise_dbm),
            d_pp: self.d_pp,
            d_sp: self.d_sp,
            d_ss: self.d_ss,
            d_pt_st: self.d_pt_st,
            rho: self.rho,
            rs_bar: self.rs_bar,
            solver: self.solver.clone(),
        }
    }

    /// The fixed instance, when the file carries one.
    pub fn instance(&self) -> Result<Option<Instance>> {
        match (&self.channels, &self.harvests) {
            (None, None) => Ok(None),
            (Some(channels), Some(harvests)) => {
                let inst = Instance {
                    config: self.config(),
                    channels: channels.clone(),
                    harvests: harvests.clone(),
                };
                inst.validate()?;
                Ok(Some(inst))
            }
            _ => Err(Error::Parse("an instance needs both [channels] and [harvests]".into())),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.config().validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Renders `v` with six significant digits.
pub fn sig6(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let magnitude = v.abs().log10().floor() as i32;
    if (-4..6).contains(&magnitude) {
        let decimals = (5 - magnitude).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.5e}")
    }
}

/// CSV text with a header row; every cell is a number rendered by [`sig6`]
/// or a verbatim integer.
pub fn csv_text(header: &[&str], rows: &[Vec<Cell>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render)).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Real(f64),
    Count(usize),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Real(v) => sig6(*v),
            Cell::Count(k) => k.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(3.00730123), "3.00730");
        assert_eq!(sig6(0.5), "0.500000");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(-0.000123456789), "-0.000123457");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn empty_file_gives_defaults() {
        let f = ConfigFile::parse("").unwrap();
        assert_eq!(f.config(), ScenarioConfig::default());
        assert!(f.instance().unwrap().is_none());
    }

    #[test]
    fn noise_is_converted_from_dbm() {
        let f = ConfigFile::parse("noise_dbm = 30.0\nrs_bar = 0.2\n[solver]\nfeas_tol = 1e-5\n").unwrap();
        let c = f.config();
        assert!((c.noise_power - 1.0).abs() < 1e-12);
        assert_eq!(c.rs_bar, 0.2);
        assert_eq!(c.solver.feas_tol, 1e-5);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ConfigFile::parse("bogus = 1").is_err());
        assert!(ConfigFile::parse("alpha = 2.0").is_err());
        assert!(ConfigFile::parse("n_slots = \"five\"").is_err());
    }

    #[test]
    fn instance_round_trip() {
        let inst = fixture::worked_example_instance();
        let text = ConfigFile::from_instance(&inst).to_toml().unwrap();
        let back = ConfigFile::parse(&text).unwrap().instance().unwrap().unwrap();
        assert_eq!(back.channels, inst.channels);
        assert_eq!(back.harvests, inst.harvests);
        assert!((back.config.noise_power - inst.config.noise_power).abs() < 1e-15);
    }

    #[test]
    fn half_an_instance_is_an_error() {
        let f = ConfigFile::parse("n_slots = 1\n[harvests]\ne_p = [1.0]\ne_s = [0.0]\n").unwrap();
        assert!(f.instance().is_err());
    }

    #[test]
    fn csv_layout() {
        let text = csv_text(&["a", "b", "n"], &[vec![Cell::Real(0.25), Cell::Empty, Cell::Count(3)]]).unwrap();
        assert_eq!(text, "a,b,n\n0.250000,,3\n");
    }
}
