use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::Image;
use crate::binio::{Reader, Writer};
use crate::classifier::LabeledImage;
use crate::error::{Error, Result};
use crate::Label;

pub const DATASET_MAGIC: &[u8; 4] = b"DFTA";
const VERSION: u16 = 1;

/// Label file written beside exported PNGs.
pub const LABELS_CSV: &str = "labels.csv";

/// Same-sized labeled images.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    width: usize,
    height: usize,
    channels: usize,
    items: Vec<LabeledImage>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    filename: String,
    label: u8,
    domain: u8,
}

impl Dataset {
    pub fn new(width: usize, height: usize, channels: usize, items: Vec<LabeledImage>) -> Result<Self> {
        if width == 0 || height == 0 || width > u16::MAX as usize || height > u16::MAX as usize {
            return Err(Error::invalid(format!("dataset image size {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("{channels} channels (expected 1 or 3)")));
        }
        if items.len() > u32::MAX as usize {
            return Err(Error::invalid("too many images for one dataset file"));
        }
        for (i, it) in items.iter().enumerate() {
            if it.image.dims() != (width, height, channels) {
                return Err(Error::InvalidImage(format!(
                    "image {i} is {:?}, dataset holds {:?}",
                    it.image.dims(),
                    (width, height, channels)
                )));
            }
        }
        Ok(Dataset {
            width,
            height,
            channels,
            items,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn items(&self) -> &[LabeledImage] {
        &self.items
    }

    pub fn into_items(self) -> Vec<LabeledImage> {
        self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.items.iter().map(|i| i.label).collect()
    }

    /// Images at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let items = indices
            .iter()
            .map(|&i| {
                self.items
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("index {i} outside a dataset of {}", self.items.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.width, self.height, self.channels, items)
    }

    pub fn count(&self, label: Label) -> usize {
        self.items.iter().filter(|i| i.label == label).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(DATASET_MAGIC);
        w.u16(VERSION);
        w.u32(self.items.len() as u32);
        w.u16(self.width as u16);
        w.u16(self.height as u16);
        w.u16(self.channels as u16);
        for it in &self.items {
            w.u8(it.label.index() as u8);
            w.u8(it.domain);
            w.bytes(it.image.pixels());
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != DATASET_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                msg: "bad magic (not a DFTA dataset)".into(),
            });
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Parse {
                offset: 4,
                msg: format!("unsupported version {version}"),
            });
        }
        let count = r.u32()? as usize;
        let (width, height, channels) = (r.u16()? as usize, r.u16()? as usize, r.u16()? as usize);
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::Parse {
                offset: 10,
                msg: format!("invalid image shape {width}x{height}x{channels}"),
            });
        }
        let per = width * height * channels;
        let mut items = Vec::with_capacity(count.min(bytes.len() / (per + 2)));
        for _ in 0..count {
            let at = r.pos();
            let label = Label::from_index(r.u8()? as usize).ok_or_else(|| Error::Parse {
                offset: at as u64,
                msg: "label byte is neither 0 nor 1".into(),
            })?;
            let domain = r.u8()?;
            let pixels = r.take(per)?.to_vec();
            items.push(LabeledImage {
                image: Image::new(width, height, channels, pixels)?,
                label,
                domain,
            });
        }
        if !r.is_empty() {
            return Err(r.err("trailing bytes after the last image"));
        }
        Dataset::new(width, height, channels, items)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Writes `00000.png, 00001.png, ...` and a `labels.csv` with columns
    /// filename, label, domain.
    pub fn export_png_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut csv = csv::Writer::from_path(dir.join(LABELS_CSV)).map_err(csv_err)?;
        for (i, it) in self.items.iter().enumerate() {
            let filename = format!("{i:05}.png");
            it.image.save_png(dir.join(&filename))?;
            csv.serialize(LabelRow {
                filename,
                label: it.label.index() as u8,
                domain: it.domain,
            })
            .map_err(csv_err)?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Reads a directory of PNGs listed in `labels.csv`, in file order. All
    /// images must share one size.
    pub fn import_png_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut csv = csv::Reader::from_path(dir.join(LABELS_CSV)).map_err(csv_err)?;
        let mut items = Vec::new();
        for (line, row) in csv.deserialize::<LabelRow>().enumerate() {
            let row = row.map_err(csv_err)?;
            let label = Label::from_index(row.label as usize).ok_or_else(|| {
                Error::invalid(format!("{LABELS_CSV} row {}: label {} is not 0 or 1", line + 1, row.label))
            })?;
            items.push(LabeledImage {
                image: Image::load_png(dir.join(&row.filename))?,
                label,
                domain: row.domain,
            });
        }
        let (w, h, c) = items.first().map(|i| i.image.dims()).unwrap_or((1, 1, 3));
        Dataset::new(w, h, c, items)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("label file: {e}"))
}
