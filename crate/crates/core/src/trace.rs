use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_num, parse_commented_csv, write_commented_csv};

/// What the abscissa of a trace measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbscissaUnit {
    Microseconds,
    Pulses,
    Gauss,
    Gigahertz,
    Nanoseconds,
}

impl AbscissaUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            AbscissaUnit::Microseconds => "us",
            AbscissaUnit::Pulses => "pulses",
            AbscissaUnit::Gauss => "G",
            AbscissaUnit::Gigahertz => "GHz",
            AbscissaUnit::Nanoseconds => "ns",
        }
    }
}

impl fmt::Display for AbscissaUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AbscissaUnit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "us" => Ok(AbscissaUnit::Microseconds),
            "pulses" => Ok(AbscissaUnit::Pulses),
            "G" => Ok(AbscissaUnit::Gauss),
            "GHz" => Ok(AbscissaUnit::Gigahertz),
            "ns" => Ok(AbscissaUnit::Nanoseconds),
            other => Err(format!("unknown unit `{other}`")),
        }
    }
}

/// An ordered signal, simulated or measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    pub abscissa: Vec<f64>,
    pub values: Vec<f64>,
    pub unit: AbscissaUnit,
    /// Generating parameters, written as extra comment lines.
    pub params: BTreeMap<String, f64>,
}

impl SignalTrace {
    pub fn new(abscissa: Vec<f64>, values: Vec<f64>, unit: AbscissaUnit) -> Result<Self> {
        if abscissa.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "trace has {} abscissa points but {} values",
                abscissa.len(),
                values.len()
            )));
        }
        if abscissa.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "trace abscissa must be strictly increasing".into(),
            ));
        }
        Ok(SignalTrace {
            abscissa,
            values,
            unit,
            params: BTreeMap::new(),
        })
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index and value of the smallest sample.
    pub fn argmin(&self) -> Option<(usize, f64)> {
        self.values
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Interior strict local minima as `(abscissa, value)`.
    pub fn local_minima(&self) -> Vec<(f64, f64)> {
        self.values
            .windows(3)
            .enumerate()
            .filter(|(_, w)| w[1] < w[0] && w[1] <= w[2])
            .map(|(i, w)| (self.abscissa[i + 1], w[1]))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut meta = vec![("unit".to_string(), self.unit.as_str().to_string())];
        meta.extend(self.params.iter().map(|(k, v)| (k.clone(), fmt_num(*v))));
        write_commented_csv(&meta, &["abscissa", "value"], &[&self.abscissa, &self.values])
    }

    pub fn from_csv(text: &str, source_name: &str) -> Result<Self> {
        let csv = parse_commented_csv(text, source_name)?;
        let err = |line, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let unit = csv
            .meta_value("unit")
            .ok_or_else(|| err(1, "missing `# unit=` comment line".into()))?
            .parse::<AbscissaUnit>()
            .map_err(|m| err(1, m))?;
        if csv.header != ["abscissa", "value"] {
            return Err(err(1, format!("expected header `abscissa,value`, got `{}`", csv.header.join(","))));
        }
        let (abscissa, values) = csv.rows.iter().map(|(_, r)| (r[0], r[1])).unzip();
        let mut trace = SignalTrace::new(abscissa, values, unit).map_err(|e| err(1, e.to_string()))?;
        for (k, v) in &csv.meta {
            if k != "unit" {
                if let Ok(x) = v.parse() {
                    trace.params.insert(k.clone(), x);
                }
            }
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(SignalTrace::new(vec![1.0, 2.0], vec![1.0], AbscissaUnit::Microseconds).is_err());
        assert!(SignalTrace::new(vec![1.0, 1.0], vec![1.0, 1.0], AbscissaUnit::Microseconds).is_err());
    }

    #[test]
    fn missing_unit_is_an_error() {
        let e = SignalTrace::from_csv("abscissa,value\n1,1\n", "t.csv").unwrap_err();
        assert!(e.to_string().contains("unit"));
    }

    #[test]
    fn local_minima() {
        let t = SignalTrace::new(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![1.0, 0.2, 0.8, 0.1, 0.5],
            AbscissaUnit::Pulses,
        )
        .unwrap();
        assert_eq!(t.local_minima(), vec![(1.0, 0.2), (3.0, 0.1)]);
        assert_eq!(t.argmin(), Some((3, 0.1)));
    }

    proptest! {
        #[test]
        fn csv_round_trip(values in proptest::collection::vec(-1.0f64..1.0, 1..50), step in 0.01f64..3.0) {
            let abscissa: Vec<f64> = (0..values.len()).map(|i| 1.0 + step * i as f64).collect();
            let t = SignalTrace::new(abscissa, values, AbscissaUnit::Microseconds).unwrap().with_param("n_pulses", 8.0);
            let back = SignalTrace::from_csv(&t.to_csv(), "t").unwrap();
            prop_assert_eq!(back.unit, t.unit);
            prop_assert_eq!(back.params.get("n_pulses"), Some(&8.0));
            for (a, b) in back.values.iter().zip(&t.values) {
                prop_assert!((a - b).abs() <= 1e-11 * b.abs().max(1e-300));
            }
        }
    }
}
