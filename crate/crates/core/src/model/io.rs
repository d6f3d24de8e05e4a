use super::{ArComponent, Delta, Lorentzian, SpectralDensityModel};
use crate::error::{Error, Result};
use crate::units;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// On-disk form of a spectral-density model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u32>,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar: Option<ArDocument>,
    /// Width applied to Lorentzians that omit `gamma_cm1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_gamma_cm1: Option<f64>,
    #[serde(default)]
    pub lorentzians: Vec<LorentzianDocument>,
    #[serde(default)]
    pub deltas: Vec<DeltaDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_report: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArDocument {
    #[serde(rename = "S")]
    pub s_total: f64,
    pub s1: f64,
    pub s2: f64,
    #[serde(rename = "w1_meV")]
    pub w1_mev: f64,
    #[serde(rename = "w2_meV")]
    pub w2_mev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LorentzianDocument {
    pub omega_cm1: f64,
    pub hr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_cm1: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaDocument {
    pub omega_cm1: f64,
    pub hr: f64,
}

impl ModelDocument {
    pub fn from_model(model: &SpectralDensityModel) -> Self {
        ModelDocument {
            version: Some(1),
            label: model.label.clone(),
            ar: model.ar.map(|a| ArDocument {
                s_total: a.s_total,
                s1: a.s1,
                s2: a.s2,
                w1_mev: units::cm1_to_mev(a.w1),
                w2_mev: units::cm1_to_mev(a.w2),
            }),
            default_gamma_cm1: None,
            lorentzians: model
                .lorentzians
                .iter()
                .map(|l| LorentzianDocument { omega_cm1: l.omega, hr: l.hr, gamma_cm1: Some(l.gamma) })
                .collect(),
            deltas: model.deltas.iter().map(|d| DeltaDocument { omega_cm1: d.omega, hr: d.hr }).collect(),
            fit_report: None,
        }
    }

    pub fn into_model(self) -> Result<SpectralDensityModel> {
        let ar = match self.ar {
            Some(a) => Some(ArComponent::from_mev(a.s_total, a.s1, a.s2, a.w1_mev, a.w2_mev)?),
            None => None,
        };
        let mut lorentzians = Vec::with_capacity(self.lorentzians.len());
        for (i, l) in self.lorentzians.iter().enumerate() {
            let gamma = l.gamma_cm1.or(self.default_gamma_cm1).ok_or_else(|| {
                Error::validation(format!("lorentzians[{i}].gamma_cm1"), "missing and no default_gamma_cm1 given")
            })?;
            let lz = Lorentzian { omega: l.omega_cm1, hr: l.hr, gamma };
            lz.validate(&format!("lorentzians[{i}]"))?;
            lorentzians.push(lz);
        }
        let deltas = self.deltas.iter().map(|d| Delta { omega: d.omega_cm1, hr: d.hr }).collect();
        SpectralDensityModel::new(self.label, ar, lorentzians, deltas)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model document serializes");
        s.push('\n');
        s
    }
}

/// Parse and validate a JSON model document.
pub fn parse_model(text: &str) -> Result<SpectralDensityModel> {
    let doc: ModelDocument =
        serde_json::from_str(text).map_err(|e| Error::parse(e.to_string(), Some(e.line())))?;
    doc.into_model()
}

pub fn parse_model_file(path: &Path) -> Result<SpectralDensityModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        parse_mode_table(&text, &label, None)
    } else {
        parse_model(&text)
    }
}

/// Parse a `omega_cm1,hr` mode table into Lorentzians.
///
/// The width comes from `default_gamma` or else from a `# gamma_cm1: <value>` comment line.
pub fn parse_mode_table(text: &str, label: &str, default_gamma: Option<f64>) -> Result<SpectralDensityModel> {
    let mut gamma = default_gamma;
    for line in text.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("gamma_cm1") {
                let v = v.trim_start_matches([':', '=', ' ']).trim();
                if gamma.is_none() {
                    gamma = Some(v.parse().map_err(|_| Error::parse(format!("bad gamma_cm1 value {v:?}"), None))?);
                }
            }
        }
    }
    let gamma = gamma.ok_or_else(|| Error::validation("gamma_cm1", "mode table needs a default width"))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::parse(e.to_string(), None))?.clone();
    if headers.len() < 2 || &headers[0] != "omega_cm1" || &headers[1] != "hr" {
        return Err(Error::parse(format!("expected header omega_cm1,hr, found {:?}", headers), None));
    }
    let mut lorentzians = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(e.to_string(), e.position().map(|p| p.line() as usize)))?;
        let line = rec.position().map(|p| p.line() as usize);
        let num = |k: usize, name: &str| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| Error::parse(format!("missing {name}"), line))?
                .parse::<f64>()
                .map_err(|_| Error::parse(format!("{name} is not a number"), line))
        };
        let l = Lorentzian { omega: num(0, "omega_cm1")?, hr: num(1, "hr")?, gamma };
        l.validate(&format!("row {}", i + 1))?;
        lorentzians.push(l);
    }
    SpectralDensityModel::new(label, None, lorentzians, vec![])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_json() {
        let m = crate::data::fmo_effective().unwrap();
        let text = ModelDocument::from_model(&m).to_json();
        let back = parse_model(&text).unwrap();
        assert_eq!(back.lorentzians, m.lorentzians);
        let (a, b) = (back.ar.unwrap(), m.ar.unwrap());
        assert!(((a.w1 - b.w1) / b.w1).abs() < 1e-12);
    }

    #[test]
    fn empty_model_is_rejected() {
        let e = parse_model(r#"{"label":"x"}"#).unwrap_err();
        assert!(matches!(e, Error::Validation { .. }));
    }

    #[test]
    fn zero_width_is_rejected_with_field() {
        let e = parse_model(r#"{"label":"x","lorentzians":[{"omega_cm1":100,"hr":0.1,"gamma_cm1":0}]}"#)
            .unwrap_err();
        match e {
            Error::Validation { field, .. } => assert_eq!(field, "lorentzians[0].gamma_cm1"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn schema_errors_carry_line() {
        let text = "{\n  \"label\": \"x\",\n  \"deltas\": [{\"omega_cm1\": \"fast\", \"hr\": 1}]\n}";
        match parse_model(text).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, Some(3));
                assert!(!message.is_empty());
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn mode_table_matches_bundled_json() {
        let table = parse_mode_table(&crate::data::load_text("fmo_modes.csv").unwrap(), "t", None).unwrap();
        let full = crate::data::fmo_full().unwrap();
        assert_eq!(table.lorentzians, full.lorentzians);
        let e = parse_mode_table("omega_cm1,hr\n10,-1\n", "t", Some(5.0)).unwrap_err();
        assert!(matches!(e, Error::Validation { .. }));
        assert!(parse_mode_table("omega_cm1,hr\n10,1\n", "t", None).is_err());
    }
}
