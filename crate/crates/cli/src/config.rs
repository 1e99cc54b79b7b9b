use std::path::Path;

use ddspin::{ElectronSubspace, Error, FieldConfig, HyperfineCoupling, NuclearSpecies, NuclearSpin, Result, SpinSystem};
use serde::{Deserialize, Serialize};

/// One nucleus: a built-in species name or an explicit gyromagnetic ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleusConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_khz_per_gauss: Option<f64>,
    pub a_par_khz: f64,
    pub a_perp_khz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub field_gauss: f64,
    /// Electron projections `[s0, s1]`.
    #[serde(default = "default_subspace")]
    pub subspace: [f64; 2],
    pub nuclei: Vec<NucleusConfig>,
}

fn default_subspace() -> [f64; 2] {
    [0.5, 1.5]
}

impl NucleusConfig {
    pub fn to_spin(&self) -> Result<NuclearSpin> {
        let species = match (&self.species, self.gamma_khz_per_gauss) {
            (Some(name), None) => NuclearSpecies::by_name(name)?,
            (name, Some(g)) => NuclearSpecies::new(name.clone().unwrap_or_else(|| "custom".into()), g)?,
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "nucleus needs `species` or `gamma_khz_per_gauss`".into(),
                ))
            }
        };
        Ok(NuclearSpin::new(species, HyperfineCoupling::new(self.a_par_khz, self.a_perp_khz)?))
    }
}

impl SystemConfig {
    pub fn to_system(&self) -> Result<SpinSystem> {
        let nuclei = self.nuclei.iter().map(NucleusConfig::to_spin).collect::<Result<Vec<_>>>()?;
        Ok(SpinSystem::new(
            FieldConfig::new(self.field_gauss)?,
            ElectronSubspace::new(self.subspace[0], self.subspace[1])?,
            nuclei,
        ))
    }
}

/// Parses JSON, reporting the failing line.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn load_system(path: &Path) -> Result<SpinSystem> {
    let cfg: SystemConfig = parse_json(&read_text(path)?, &path.display().to_string())?;
    cfg.to_system()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn species_or_gamma() {
        let cfg: SystemConfig = parse_json(
            r#"{"field_gauss": 81, "nuclei": [
                {"species": "29Si", "a_par_khz": -23.5, "a_perp_khz": 12.0},
                {"gamma_khz_per_gauss": 1.0705, "a_par_khz": 5, "a_perp_khz": 1}]}"#,
            "s.json",
        )
        .unwrap();
        let sys = cfg.to_system().unwrap();
        assert_eq!(sys.subspace, ElectronSubspace::default());
        assert_eq!(sys.nuclei[0].species, NuclearSpecies::si29());
        assert_eq!(sys.nuclei[1].species.gamma, 1.0705);
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse_json::<SystemConfig>("{\n\"field_gauss\": 81,\n\"nuclei\": [}\n", "s.json").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let cfg: SystemConfig = parse_json(r#"{"field_gauss": 81, "nuclei": [{"a_par_khz": 1, "a_perp_khz": 1}]}"#, "s").unwrap();
        assert!(cfg.to_system().is_err());
        let cfg: SystemConfig = parse_json(r#"{"field_gauss": 81, "nuclei": [{"species": "X", "a_par_khz": 1, "a_perp_khz": 1}]}"#, "s").unwrap();
        assert!(matches!(cfg.to_system(), Err(Error::UnknownSpecies(_))));
    }
}
