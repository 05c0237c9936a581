use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seg::{LabelMask, Tissue};
use crate::volume::{IntensityDomain, Spacing, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerClass {
    pub muscle: f64,
    pub sfa: f64,
    pub vfa: f64,
}

impl PerClass {
    pub fn get(&self, t: Tissue) -> f64 {
        match t {
            Tissue::Muscle => self.muscle,
            Tissue::Sfa => self.sfa,
            Tissue::Vfa => self.vfa,
            Tissue::Background => 0.0,
        }
    }

    fn set(&mut self, t: Tissue, v: f64) {
        match t {
            Tissue::Muscle => self.muscle = v,
            Tissue::Sfa => self.sfa = v,
            Tissue::Vfa => self.vfa = v,
            Tissue::Background => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceQuant {
    pub slice_index: usize,
    pub area_cm2: PerClass,
    /// Mean raw HU under each class; 0 where the class is absent.
    pub mean_hu: PerClass,
    pub pixels: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueReport {
    pub slices: Vec<SliceQuant>,
    pub volume_cm3: PerClass,
    pub slice_count: usize,
    /// Spacing of the volume the masks were measured on.
    pub spacing: Spacing,
}

/// Tissue areas, volumes and mean HU for `masks`, which cover axial slices
/// `first_slice..first_slice + masks.len()` of `volume`.
pub fn quantify(masks: &[LabelMask], volume: &Volume, first_slice: usize) -> Result<TissueReport> {
    if volume.domain() != IntensityDomain::RawHu {
        return Err(Error::Validation("quantify needs a raw HU volume".into()));
    }
    let d = volume.dims();
    if first_slice + masks.len() > d.depth {
        return Err(Error::Range(format!(
            "slices {first_slice}..{} exceed depth {}",
            first_slice + masks.len(),
            d.depth
        )));
    }
    let s = volume.spacing();
    let px_cm2 = s.sy * s.sx / 100.0;
    let mut slices = Vec::with_capacity(masks.len());
    let mut volume_cm3 = PerClass::default();
    for (i, m) in masks.iter().enumerate() {
        if m.dims() != (d.rows, d.cols) {
            return Err(Error::Validation(format!(
                "mask {}x{} does not match slice {}x{}",
                m.rows(),
                m.cols(),
                d.rows,
                d.cols
            )));
        }
        let k = first_slice + i;
        let hu = volume.axial(k);
        let mut count = [0usize; 4];
        let mut sum = [0.0f64; 4];
        for (&l, &v) in m.labels().iter().zip(hu) {
            count[l as usize] += 1;
            sum[l as usize] += v;
        }
        let mut q = SliceQuant {
            slice_index: k,
            area_cm2: PerClass::default(),
            mean_hu: PerClass::default(),
            pixels: [count[1], count[2], count[3]],
        };
        for t in Tissue::CLASSES {
            let j = t as usize;
            q.area_cm2.set(t, count[j] as f64 * px_cm2);
            q.mean_hu.set(t, if count[j] > 0 { sum[j] / count[j] as f64 } else { 0.0 });
        }
        for t in Tissue::CLASSES {
            volume_cm3.set(t, volume_cm3.get(t) + q.area_cm2.get(t) * s.sz / 10.0);
        }
        slices.push(q);
    }
    Ok(TissueReport {
        slice_count: slices.len(),
        slices,
        volume_cm3,
        spacing: s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Validation(format!("unknown report format '{other}'"))),
        }
    }
}

/// `printf("%g")`-style formatting with `sig` significant digits.
pub fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= sig as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mant), exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{v:.decimals$}"))
    }
}

pub const CSV_HEADER: [&str; 7] = [
    "slice_index",
    "muscle_cm2",
    "sfa_cm2",
    "vfa_cm2",
    "muscle_hu",
    "sfa_hu",
    "vfa_hu",
];

pub fn report_csv(report: &TissueReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for s in &report.slices {
        let mut row = vec![s.slice_index.to_string()];
        for t in Tissue::CLASSES {
            row.push(format_sig(s.area_cm2.get(t), 6));
        }
        for t in Tissue::CLASSES {
            row.push(format_sig(s.mean_hu.get(t), 6));
        }
        w.write_record(&row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub fn export_report(report: &TissueReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Csv => report_csv(report)?,
        ReportFormat::Json => serde_json::to_string_pretty(report)?,
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_report_json(path: impl AsRef<Path>) -> Result<TissueReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    fn vol(depth: usize, rows: usize, cols: usize, sp: Spacing) -> Volume {
        let dims = Dims::new(depth, rows, cols);
        Volume::from_hu(dims, sp, (0..dims.len()).map(|i| (i % 7) as f64 * 10.0 - 30.0).collect()).unwrap()
    }

    #[test]
    fn area_arithmetic() {
        let v = vol(1, 10, 10, Spacing::new(5.0, 2.0, 2.0).unwrap());
        let m = LabelMask::new(10, 10, vec![2; 100]).unwrap();
        let r = quantify(&[m], &v, 0).unwrap();
        assert!((r.slices[0].area_cm2.sfa - 4.0).abs() < 1e-12);
        assert_eq!(r.slices[0].area_cm2.muscle, 0.0);
        assert_eq!(r.slices[0].mean_hu.muscle, 0.0);
        let want_hu = v.voxels().iter().sum::<f64>() / 100.0;
        assert!((r.slices[0].mean_hu.sfa - want_hu).abs() < 1e-12);
    }

    #[test]
    fn empty_masks_zero_report() {
        let v = vol(3, 4, 4, Spacing::isotropic(1.0).unwrap());
        let masks = vec![LabelMask::background(4, 4); 3];
        let r = quantify(&masks, &v, 0).unwrap();
        assert_eq!(r.volume_cm3, PerClass::default());
        assert!(r.slices.iter().all(|s| s.area_cm2 == PerClass::default()));
    }

    #[test]
    fn volume_aggregation() {
        // 100 px at 2x2 mm = 4 cm² per slice, 10 slices, 5 mm thick
        let v = vol(10, 10, 10, Spacing::new(5.0, 2.0, 2.0).unwrap());
        let masks = vec![LabelMask::new(10, 10, vec![1; 100]).unwrap(); 10];
        let r = quantify(&masks, &v, 0).unwrap();
        assert!((r.volume_cm3.muscle - 20.0).abs() < 1e-12);
        let sum: f64 = r.slices.iter().map(|s| s.area_cm2.muscle * 0.5).sum();
        assert!((sum - r.volume_cm3.muscle).abs() < 1e-9);

        let a = quantify(&masks[..4], &v, 0).unwrap();
        let b = quantify(&masks[4..], &v, 4).unwrap();
        assert!((a.volume_cm3.muscle + b.volume_cm3.muscle - r.volume_cm3.muscle).abs() < 1e-9);
        assert_eq!(b.slices[0].slice_index, 4);
    }

    #[test]
    fn dims_and_range_errors() {
        let v = vol(2, 4, 4, Spacing::isotropic(1.0).unwrap());
        assert!(quantify(&[LabelMask::background(4, 5)], &v, 0).is_err());
        assert!(quantify(&[LabelMask::background(4, 4)], &v, 2).is_err());
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(4.0, 6), "4");
        assert_eq!(format_sig(123.456789, 6), "123.457");
        assert_eq!(format_sig(-30.5, 6), "-30.5");
        assert_eq!(format_sig(0.0001234567, 6), "0.000123457");
        assert_eq!(format_sig(0.00001234567, 6), "1.23457e-05");
        assert_eq!(format_sig(1234567.0, 6), "1.23457e+06");
        assert_eq!(format_sig(999999.5, 6), "1e+06");
        assert_eq!(format_sig(0.0, 6), "0");
    }

    #[test]
    fn exports() {
        let dir = tempfile::tempdir().unwrap();
        let v = vol(3, 5, 5, Spacing::new(3.0, 0.7, 0.7).unwrap());
        let labels: Vec<u8> = (0..25).map(|i| (i % 4) as u8).collect();
        let masks = vec![LabelMask::new(5, 5, labels).unwrap(); 3];
        let r = quantify(&masks, &v, 0).unwrap();

        let j = dir.path().join("r.json");
        export_report(&r, ReportFormat::Json, &j).unwrap();
        assert_eq!(load_report_json(&j).unwrap(), r);

        let c = dir.path().join("r.csv");
        export_report(&r, ReportFormat::Csv, &c).unwrap();
        let mut rd = csv::Reader::from_path(&c).unwrap();
        assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 3);
        let area: f64 = rows[0][1].parse().unwrap();
        assert!((area - r.slices[0].area_cm2.muscle).abs() <= 1e-5 * area.abs());
        assert!(std::fs::read_to_string(&c).unwrap().lines().count() == 4);

        let bad = dir.path().join("missing").join("r.csv");
        assert!(export_report(&r, ReportFormat::Csv, bad).unwrap_err().is_io());
    }
}
