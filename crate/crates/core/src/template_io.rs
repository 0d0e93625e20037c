//! The `MNT 1` text template format and dataset directory scanning.
//!
//! ```text
//! MNT 1
//! <width> <height>
//! <count>
//! <x> <y> <direction> <E|B> <quality>    (count lines)
//! ```
//!
//! Lines starting with `#` are ignored anywhere in the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{DatasetError, TemplateError};
use crate::model::{Minutia, MinutiaTemplate, MinutiaType};

fn format_err(line: usize, message: impl Into<String>) -> TemplateError {
    TemplateError::Format {
        line,
        message: message.into(),
    }
}

fn range_err(line: usize, message: impl Into<String>) -> TemplateError {
    TemplateError::Range {
        line,
        message: message.into(),
    }
}

fn parse_real(field: &str, line: usize, name: &str) -> Result<f64, TemplateError> {
    let v: f64 = field
        .parse()
        .map_err(|_| format_err(line, format!("{name} `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(format_err(line, format!("{name} `{field}` is not finite")));
    }
    Ok(v)
}

/// Parses a template; `id` is attached as-is.
pub fn parse_template(text: &str, id: &str) -> Result<MinutiaTemplate, TemplateError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.starts_with('#'));

    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| format_err(0, format!("unexpected end of file, expected {what}")))
    };

    let (ln, header) = next("header")?;
    if header != "MNT 1" {
        return Err(format_err(
            ln,
            format!("bad header `{header}`, expected `MNT 1`"),
        ));
    }

    let (ln, dims) = next("image size")?;
    let dims: Vec<&str> = dims.split_whitespace().collect();
    let [w, h] = dims[..] else {
        return Err(format_err(ln, "image size line needs 2 fields"));
    };
    let parse_dim = |s: &str| -> Result<u32, TemplateError> {
        match s.parse::<u32>() {
            Ok(0) => Err(range_err(ln, "image size must be positive")),
            Ok(v) => Ok(v),
            Err(_) => Err(format_err(
                ln,
                format!("image size `{s}` is not a positive integer"),
            )),
        }
    };
    let (width, height) = (parse_dim(w)?, parse_dim(h)?);

    let (ln, count) = next("minutia count")?;
    let count: usize = count
        .parse()
        .map_err(|_| format_err(ln, format!("count `{count}` is not a non-negative integer")))?;

    let mut minutiae = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let (ln, record) = next("minutia record")?;
        let fields: Vec<&str> = record.split_whitespace().collect();
        let [x, y, d, kind, q] = fields[..] else {
            return Err(format_err(
                ln,
                format!("record needs 5 fields, found {}", fields.len()),
            ));
        };
        let x = parse_real(x, ln, "x")?;
        let y = parse_real(y, ln, "y")?;
        let direction = parse_real(d, ln, "direction")?;
        let kind = MinutiaType::from_code(kind)
            .ok_or_else(|| format_err(ln, format!("type `{kind}` is not E or B")))?;
        let quality = parse_real(q, ln, "quality")?;
        if !(0.0..360.0).contains(&direction) {
            return Err(range_err(
                ln,
                format!("direction {direction} outside [0, 360)"),
            ));
        }
        if !(0.0..=1.0).contains(&quality) {
            return Err(range_err(ln, format!("quality {quality} outside [0, 1]")));
        }
        if !(0.0..=f64::from(width)).contains(&x) || !(0.0..=f64::from(height)).contains(&y) {
            return Err(range_err(
                ln,
                format!("position ({x}, {y}) outside {width}x{height} image"),
            ));
        }
        minutiae.push(Minutia {
            x,
            y,
            direction,
            kind,
            quality,
        });
    }
    if let Some((ln, extra)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(format_err(
            ln,
            format!("unexpected trailing record `{extra}`"),
        ));
    }
    Ok(MinutiaTemplate::new(id, width, height, minutiae))
}

/// Serializes with six decimals per real field.
pub fn write_template(t: &MinutiaTemplate) -> String {
    let mut out = String::with_capacity(32 + 40 * t.len());
    let _ = write!(out, "MNT 1\n{} {}\n{}\n", t.width, t.height, t.len());
    for m in &t.minutiae {
        // directions just under 360 must not round up onto the open bound
        let direction = m.direction.min(359.999_999);
        let _ = writeln!(
            out,
            "{:.6} {:.6} {:.6} {} {:.6}",
            m.x,
            m.y,
            direction,
            m.kind.code(),
            m.quality
        );
    }
    out
}

/// Reads and parses a template file; the id is the file stem.
pub fn read_template(path: &Path) -> Result<MinutiaTemplate, TemplateError> {
    let text = fs::read_to_string(path).map_err(|source| TemplateError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_template(&text, &id)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub subject: u32,
    pub impression: u32,
    pub path: PathBuf,
}

/// Templates of a dataset keyed by `(subject, impression)`, sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub name: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Builds a manifest, rejecting duplicate keys. Entries are sorted.
    pub fn from_entries(
        name: impl Into<String>,
        mut entries: Vec<ManifestEntry>,
    ) -> Result<Self, DatasetError> {
        entries.sort_by_key(|e| (e.subject, e.impression));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].subject, w[0].impression) == (w[1].subject, w[1].impression))
        {
            return Err(DatasetError::DuplicateEntry {
                subject: w[0].subject,
                impression: w[0].impression,
            });
        }
        Ok(DatasetManifest {
            name: name.into(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Impressions grouped by subject, both ascending.
    pub fn by_subject(&self) -> BTreeMap<u32, Vec<&ManifestEntry>> {
        let mut groups: BTreeMap<u32, Vec<&ManifestEntry>> = BTreeMap::new();
        for e in &self.entries {
            groups.entry(e.subject).or_default().push(e);
        }
        groups
    }
}

/// Splits `<subject>_<impression>.<extension>` into its two numbers.
pub fn parse_entry_name(file_name: &str, extension: &str) -> Option<(u32, u32)> {
    let stem = file_name.strip_suffix(extension)?.strip_suffix('.')?;
    let (s, i) = stem.split_once('_')?;
    let all_digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(s) || !all_digits(i) {
        return None;
    }
    Some((s.parse().ok()?, i.parse().ok()?))
}

/// Collects every `<subject>_<impression>.<extension>` file directly under
/// `root`. Other files are ignored.
pub fn scan_dataset(root: &Path, extension: &str) -> Result<DatasetManifest, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: root.to_path_buf(),
        source,
    };
    let mut entries = Vec::new();
    for item in fs::read_dir(root).map_err(io_err)? {
        let item = item.map_err(io_err)?;
        let name = item.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some((subject, impression)) = parse_entry_name(name, extension) {
            if item.file_type().map_err(io_err)?.is_file() {
                entries.push(ManifestEntry {
                    subject,
                    impression,
                    path: item.path(),
                });
            }
        }
    }
    let name = root
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    DatasetManifest::from_entries(name, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only() {
        let t = parse_template("MNT 1\n300 400\n0\n", "a").unwrap();
        assert!(t.is_empty());
        assert_eq!((t.width, t.height, t.id.as_str()), (300, 400, "a"));
    }

    #[test]
    fn single_record() {
        let t = parse_template("MNT 1\n# comment\n300 400\n1\n100 150 45.0 E 0.9\n", "a").unwrap();
        assert_eq!(
            t.minutiae,
            vec![Minutia::new(100.0, 150.0, 45.0, MinutiaType::Ending).with_quality(0.9)]
        );
    }

    #[test]
    fn range_errors() {
        let bad = |rec: &str| parse_template(&format!("MNT 1\n300 400\n1\n{rec}\n"), "a");
        assert!(matches!(
            bad("1 1 360.0 E 0.5"),
            Err(TemplateError::Range { line: 4, .. })
        ));
        assert!(matches!(
            bad("1 1 -0.5 E 0.5"),
            Err(TemplateError::Range { .. })
        ));
        assert!(matches!(
            bad("1 1 10 B 1.5"),
            Err(TemplateError::Range { .. })
        ));
        assert!(matches!(
            bad("301 1 10 B 0.5"),
            Err(TemplateError::Range { .. })
        ));
        assert!(matches!(
            bad("1 -1 10 B 0.5"),
            Err(TemplateError::Range { .. })
        ));
        assert!(bad("300 400 359.999 B 1").is_ok());
    }

    #[test]
    fn format_errors() {
        let fmt =
            |text: &str| matches!(parse_template(text, "a"), Err(TemplateError::Format { .. }));
        assert!(fmt("MNT 2\n300 400\n0\n"));
        assert!(fmt("XYZ 1\n300 400\n0\n"));
        assert!(fmt("MNT 1\n300\n0\n"));
        assert!(fmt("MNT 1\n300 400\n-1\n"));
        assert!(fmt("MNT 1\n300 400\n1\n1 1 10 E\n"));
        assert!(fmt("MNT 1\n300 400\n1\n1 1 ten E 0.5\n"));
        assert!(fmt("MNT 1\n300 400\n1\n1 1 10 X 0.5\n"));
        assert!(fmt("MNT 1\n300 400\n1\n1 1 NaN E 0.5\n"));
        assert!(fmt("MNT 1\n300 400\n2\n1 1 10 E 0.5\n"));
        assert!(fmt("MNT 1\n300 400\n0\n1 1 10 E 0.5\n"));
        assert!(fmt(""));
    }

    #[test]
    fn write_examples() {
        let empty = MinutiaTemplate::new("e", 10, 20, vec![]);
        assert_eq!(write_template(&empty), "MNT 1\n10 20\n0\n");
        let one = MinutiaTemplate::new(
            "o",
            10,
            20,
            vec![Minutia::new(1.5, 2.0, 359.25, MinutiaType::Bifurcation).with_quality(0.75)],
        );
        assert_eq!(
            write_template(&one),
            "MNT 1\n10 20\n1\n1.500000 2.000000 359.250000 B 0.750000\n"
        );
    }

    #[test]
    fn entry_names() {
        assert_eq!(parse_entry_name("12_3.mnt", "mnt"), Some((12, 3)));
        assert_eq!(parse_entry_name("12_3.gt", "mnt"), None);
        assert_eq!(parse_entry_name("a_3.mnt", "mnt"), None);
        assert_eq!(parse_entry_name("12_.mnt", "mnt"), None);
        assert_eq!(parse_entry_name("12_3_4.mnt", "mnt"), None);
        assert_eq!(parse_entry_name("12_3mnt", "mnt"), None);
    }

    #[test]
    fn duplicate_keys_rejected() {
        let e = |s, i, p: &str| ManifestEntry {
            subject: s,
            impression: i,
            path: PathBuf::from(p),
        };
        let err =
            DatasetManifest::from_entries("d", vec![e(1, 1, "a"), e(2, 1, "b"), e(1, 1, "c")]);
        assert!(matches!(
            err,
            Err(DatasetError::DuplicateEntry {
                subject: 1,
                impression: 1
            })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn write_then_parse_is_identity(
                pts in prop::collection::vec(
                    (0.0f64..=500.0, 0.0f64..=400.0, prop_oneof![0.0f64..360.0, Just(359.999_999_9)], any::<bool>(), 0.0f64..=1.0),
                    0..60,
                )
            ) {
                let t = MinutiaTemplate::new(
                    "p",
                    500,
                    400,
                    pts.into_iter()
                        .map(|(x, y, d, e, q)| Minutia {
                            x, y,
                            direction: d,
                            kind: if e { MinutiaType::Ending } else { MinutiaType::Bifurcation },
                            quality: q,
                        })
                        .collect(),
                );
                let back = parse_template(&write_template(&t), "p").unwrap();
                prop_assert_eq!(back.len(), t.len());
                prop_assert_eq!((back.width, back.height), (t.width, t.height));
                for (a, b) in t.minutiae.iter().zip(&back.minutiae) {
                    prop_assert!((a.x - b.x).abs() <= 1e-6);
                    prop_assert!((a.y - b.y).abs() <= 1e-6);
                    prop_assert!((a.direction - b.direction).abs() <= 1e-6);
                    prop_assert!((a.quality - b.quality).abs() <= 1e-6);
                    prop_assert_eq!(a.kind, b.kind);
                }
            }

            #[test]
            fn parser_never_accepts_invalid(
                x in -10.0f64..110.0, y in -10.0f64..110.0,
                d in -10.0f64..370.0, q in -0.5f64..1.5,
            ) {
                let text = format!("MNT 1\n100 100\n1\n{x} {y} {d} E {q}\n");
                if let Ok(t) = parse_template(&text, "p") {
                    let m = t.minutiae[0];
                    prop_assert!(m.is_valid() && t.contains_point(m.x, m.y));
                }
            }
        }
    }
}
