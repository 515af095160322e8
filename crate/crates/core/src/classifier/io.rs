//! Model and dataset files.
//!
//! Model file, all integers and floats little-endian:
//!
//! ```text
//! magic          8 bytes  "NAMLPMDL"
//! version        u32      1
//! input_dim      u32
//! hidden         u32
//! classes        u32      5
//! seed           u64
//! name_count     u32      then per name: u32 byte length + UTF-8 bytes
//! config_len     u32      then the training config as JSON
//! engagement_eps f64
//! engagement_cap f64
//! mean           f64 × input_dim
//! std            f64 × input_dim
//! degenerate     u8  × input_dim
//! w1             f64 × input_dim·hidden   (row i = input i)
//! b1             f64 × hidden
//! w2             f64 × hidden·5           (row h = hidden unit h)
//! b2             f64 × 5
//! ```
//!
//! Dataset files are CSV with the feature columns by name plus an integer
//! `label` column (0-4); rows with an empty label are skipped.

use std::io::{self, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::model::{MlpModel, NormStats};
use super::train::{Dataset, TrainConfig};
use crate::features::{ENGAGEMENT_CAP, ENGAGEMENT_EPS};
use crate::state::NUM_STATES;

pub const MODEL_MAGIC: &[u8; 8] = b"NAMLPMDL";
pub const MODEL_VERSION: u32 = 1;
pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("model file truncated")]
    Truncated,
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for ModelFileError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            ModelFileError::Truncated
        } else {
            ModelFileError::Io(e)
        }
    }
}

impl MlpModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_u32::<LE>(MODEL_VERSION)?;
        w.write_u32::<LE>(self.input_dim as u32)?;
        w.write_u32::<LE>(self.hidden as u32)?;
        w.write_u32::<LE>(NUM_STATES as u32)?;
        w.write_u64::<LE>(self.seed)?;
        w.write_u32::<LE>(self.feature_names.len() as u32)?;
        for n in &self.feature_names {
            w.write_u32::<LE>(n.len() as u32)?;
            w.write_all(n.as_bytes())?;
        }
        let cfg = serde_json::to_vec(&self.config).map_err(io::Error::other)?;
        w.write_u32::<LE>(cfg.len() as u32)?;
        w.write_all(&cfg)?;
        w.write_f64::<LE>(ENGAGEMENT_EPS)?;
        w.write_f64::<LE>(ENGAGEMENT_CAP)?;
        for v in self.norm.mean.iter().chain(&self.norm.std) {
            w.write_f64::<LE>(*v)?;
        }
        for d in &self.norm.degenerate {
            w.write_u8(*d as u8)?;
        }
        for v in self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2) {
            w.write_f64::<LE>(*v)?;
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelFileError> {
        let mut r = Cursor::new(bytes);
        let m = Self::read_from(&mut r)?;
        if (r.position() as usize) != bytes.len() {
            return Err(ModelFileError::Corrupt("trailing bytes".into()));
        }
        Ok(m)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, ModelFileError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(ModelFileError::BadMagic);
        }
        let version = r.read_u32::<LE>()?;
        if version != MODEL_VERSION {
            return Err(ModelFileError::UnsupportedVersion(version));
        }
        let input_dim = r.read_u32::<LE>()? as usize;
        let hidden = r.read_u32::<LE>()? as usize;
        let classes = r.read_u32::<LE>()? as usize;
        if classes != NUM_STATES {
            return Err(ModelFileError::Corrupt(format!("{classes} output classes")));
        }
        if input_dim == 0 || input_dim > 1024 || hidden == 0 || hidden > 1 << 16 {
            return Err(ModelFileError::Corrupt(format!("dimensions {input_dim}x{hidden}")));
        }
        let seed = r.read_u64::<LE>()?;
        let n_names = r.read_u32::<LE>()? as usize;
        if n_names != input_dim {
            return Err(ModelFileError::Corrupt(format!(
                "{n_names} feature names for {input_dim} inputs"
            )));
        }
        let mut feature_names = Vec::with_capacity(n_names);
        for _ in 0..n_names {
            feature_names.push(read_string(r)?);
        }
        let cfg_text = read_string(r)?;
        let config: TrainConfig = serde_json::from_str(&cfg_text)
            .map_err(|e| ModelFileError::Corrupt(format!("config: {e}")))?;
        let eps = r.read_f64::<LE>()?;
        let cap = r.read_f64::<LE>()?;
        if eps != ENGAGEMENT_EPS || cap != ENGAGEMENT_CAP {
            return Err(ModelFileError::Corrupt(format!(
                "engagement constants {eps}/{cap} differ from this build"
            )));
        }
        let read_vec = |r: &mut R, n: usize| -> Result<Vec<f64>, ModelFileError> {
            (0..n).map(|_| r.read_f64::<LE>().map_err(Into::into)).collect()
        };
        let mean = read_vec(r, input_dim)?;
        let std = read_vec(r, input_dim)?;
        let degenerate = (0..input_dim)
            .map(|_| r.read_u8().map(|b| b != 0))
            .collect::<Result<Vec<_>, _>>()?;
        let w1 = read_vec(r, input_dim * hidden)?;
        let b1 = read_vec(r, hidden)?;
        let w2 = read_vec(r, hidden * NUM_STATES)?;
        let b2 = read_vec(r, NUM_STATES)?;
        let model = MlpModel {
            input_dim,
            hidden,
            w1,
            b1,
            w2,
            b2,
            norm: NormStats {
                mean,
                std,
                degenerate,
            },
            feature_names,
            config,
            seed,
        };
        let finite = [&model.w1, &model.b1, &model.w2, &model.b2, &model.norm.mean]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite || model.norm.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(ModelFileError::Corrupt("non-finite weights or statistics".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelFileError> {
        let bytes = std::fs::read(path).map_err(ModelFileError::Io)?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized model, hex encoded.
    pub fn hash_hex(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

fn read_string<R: Read>(r: &mut R) -> Result<String, ModelFileError> {
    let len = r.read_u32::<LE>()? as usize;
    if len > 1 << 20 {
        return Err(ModelFileError::Corrupt(format!("string of {len} bytes")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| ModelFileError::Corrupt(e.to_string()))
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset is missing column `{0}`")]
    MissingColumn(String),
    #[error("dataset line {line}, column `{column}`: {message}")]
    BadValue {
        line: u64,
        column: String,
        message: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads the named feature columns and the label column from CSV.
pub fn read_dataset<R: Read>(reader: R, feature_names: &[&str]) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let cols = feature_names
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<_>, _>>()?;
    let label_col = find(LABEL_COLUMN)?;
    let mut data = Dataset::new(feature_names.iter().map(|s| s.to_string()).collect());
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let label = rec.get(label_col).unwrap_or("");
        if label.is_empty() {
            continue;
        }
        let y: usize = label
            .parse()
            .ok()
            .filter(|v| *v < NUM_STATES)
            .ok_or_else(|| DatasetError::BadValue {
                line,
                column: LABEL_COLUMN.into(),
                message: format!("expected an integer 0-4, got `{label}`"),
            })?;
        let x = cols
            .iter()
            .zip(feature_names)
            .map(|(&c, name)| {
                let raw = rec.get(c).unwrap_or("");
                raw.parse::<f64>().map_err(|e| DatasetError::BadValue {
                    line,
                    column: name.to_string(),
                    message: format!("`{raw}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        data.push(x, y);
    }
    Ok(data)
}

pub fn read_dataset_file(path: impl AsRef<Path>, feature_names: &[&str]) -> Result<Dataset, DatasetError> {
    read_dataset(std::fs::File::open(path)?, feature_names)
}

/// Writes `window_end_us`, the features, and `label`.
pub fn write_dataset<W: Write>(
    w: W,
    feature_names: &[&str],
    rows: impl IntoIterator<Item = (i64, Vec<f64>, Option<usize>)>,
) -> Result<(), DatasetError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["window_end_us"];
    header.extend_from_slice(feature_names);
    header.push(LABEL_COLUMN);
    wtr.write_record(&header)?;
    for (end, x, y) in rows {
        let mut rec: Vec<String> = Vec::with_capacity(x.len() + 2);
        rec.push(end.to_string());
        rec.extend(x.iter().map(|v| format!("{v:?}")));
        rec.push(y.map(|v| v.to_string()).unwrap_or_default());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> MlpModel {
        let mut m = MlpModel::zeros(3, 2, vec!["a".into(), "b".into(), "c".into()]);
        for (i, w) in m.w1.iter_mut().enumerate() {
            *w = i as f64 * 0.1 - 0.2;
        }
        m.b2[4] = -1.5e-300;
        m.seed = 99;
        m
    }

    #[test]
    fn model_round_trips_bit_exact() {
        let m = sample_model();
        let back = MlpModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash_hex(), m.hash_hex());
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = sample_model().to_bytes();
        assert!(matches!(MlpModel::from_bytes(&bytes[..bytes.len() - 3]), Err(ModelFileError::Truncated)));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(MlpModel::from_bytes(&bad), Err(ModelFileError::BadMagic)));
        let mut v2 = bytes;
        v2[8] = 2;
        assert!(matches!(MlpModel::from_bytes(&v2), Err(ModelFileError::UnsupportedVersion(2))));
    }

    #[test]
    fn dataset_round_trip_and_missing_label() {
        let names = ["a", "b"];
        let mut buf = Vec::new();
        write_dataset(
            &mut buf,
            &names,
            vec![(5, vec![1.0, 0.1], Some(2)), (6, vec![2.0, 0.2], None), (7, vec![3.0, 0.3], Some(0))],
        )
        .unwrap();
        let d = read_dataset(buf.as_slice(), &names).unwrap();
        assert_eq!(d.y, vec![2, 0]);
        assert_eq!(d.x[1], vec![3.0, 0.3]);

        let text = "a,b\n1,2\n";
        match read_dataset(text.as_bytes(), &names) {
            Err(DatasetError::MissingColumn(c)) => assert_eq!(c, "label"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
