//! Field serialisation: a fixed binary layout plus a JSON sidecar that
//! mirrors the header.
//!
//! Layout: `u32` degree, `u32` resolution, four `f64` periods, then the
//! component arrays in lexicographic `(i < j)` order, each an `n^4` array of
//! little-endian `f64` with axis order `x1..x4` (the fourth axis fastest).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FormField, COMP_COUNT, INDEX_SETS};
use crate::grid::GridChart;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FieldHeader {
    pub degree: usize,
    pub resolution: usize,
    pub periods: [f64; 4],
    pub component_order: Vec<String>,
    pub axis_order: [String; 4],
    pub float_format: String,
}

impl FieldHeader {
    pub fn for_field(field: &FormField) -> Self {
        let names = INDEX_SETS[field.degree()]
            .iter()
            .map(|set| {
                if set.is_empty() {
                    "1".to_string()
                } else {
                    set.iter()
                        .map(|i| format!("e{}", i + 1))
                        .collect::<Vec<_>>()
                        .join("^")
                }
            })
            .collect();
        Self {
            degree: field.degree(),
            resolution: field.chart().resolution(),
            periods: field.chart().periods(),
            component_order: names,
            axis_order: ["x1".into(), "x2".into(), "x3".into(), "x4".into()],
            float_format: "f64-le".into(),
        }
    }
}

/// Writes a field in the binary layout; the sidecar goes to `path` with
/// `.json` appended.
pub fn write_field(field: &FormField, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(&(field.degree() as u32).to_le_bytes());
    out.extend_from_slice(&(field.chart().resolution() as u32).to_le_bytes());
    for p in field.chart().periods() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    for c in 0..COMP_COUNT[field.degree()] {
        for v in field.comp(c) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&out)?;
    let header = FieldHeader::for_field(field);
    let sidecar = path.with_extension(match path.extension() {
        Some(e) => format!("{}.json", e.to_string_lossy()),
        None => "json".into(),
    });
    std::fs::write(sidecar, serde_json::to_string_pretty(&header).map_err(json_err)?)?;
    Ok(())
}

/// Reads a field written by [`write_field`].
pub fn read_field(path: &Path) -> Result<FormField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 40 {
        return Err(Error::Io("field file too short".into()));
    }
    let degree = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    if degree > 4 {
        return Err(Error::Io(format!("bad degree {degree}")));
    }
    let resolution = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let mut periods = [0.0; 4];
    for (a, p) in periods.iter_mut().enumerate() {
        let off = 8 + a * 8;
        *p = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    }
    let chart = GridChart::new(resolution, periods)?;
    let m = chart.num_points();
    let expected = 40 + COMP_COUNT[degree] * m * 8;
    if bytes.len() != expected {
        return Err(Error::Io(format!(
            "field file has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut comps = Vec::with_capacity(COMP_COUNT[degree]);
    let mut off = 40;
    for _ in 0..COMP_COUNT[degree] {
        let mut arr = Vec::with_capacity(m);
        for _ in 0..m {
            arr.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
            off += 8;
        }
        comps.push(arr);
    }
    FormField::from_components(chart, degree, comps)
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(e.to_string())
}

/// Rounds to 12 significant digits; report serialisation uses this so that
/// identical runs produce byte-identical JSON.
pub fn round_for_report(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.12e}").parse().unwrap_or(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn field_round_trip() {
        let chart = GridChart::new(4, [1.0, 2.0, 1.0, 0.5]).unwrap();
        let mut rng = StdRng::seed_from_u64(2);
        let field = FormField::from_fn(chart, 2, |_, _| rng.random_range(-5.0..5.0));
        let dir = std::env::temp_dir().join("acs4_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.bin");
        write_field(&field, &path).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(field, back);
        // Sidecar mirrors the header.
        let sidecar: FieldHeader =
            serde_json::from_str(&std::fs::read_to_string(dir.join("field.bin.json")).unwrap())
                .unwrap();
        assert_eq!(sidecar, FieldHeader::for_field(&field));
        assert_eq!(sidecar.component_order[0], "e1^e2");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = std::env::temp_dir().join("acs4_io_test_trunc");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.bin");
        std::fs::write(&path, [0u8; 12]).unwrap();
        assert!(read_field(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn report_rounding_is_idempotent() {
        let v = std::f64::consts::PI * 1e-7;
        let r = round_for_report(v);
        assert_eq!(r, round_for_report(r));
        assert!((r - v).abs() < 1e-18);
    }
}
