//! Dataset discovery.
//!
//! ```text
//! dataset/
//!   frames/        PGM/PPM frames plus timestamps.txt
//!   *.evt          at most one EVT1 event file
//!   blur/ sharp/   paired images, matched by file name
//! ```
//!
//! Every part is optional, but `blur/` and `sharp/` must appear together.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use evrobust_core::dvs::synthesize_blur;
use evrobust_core::events::EventStream;
use evrobust_core::frames::{list_frame_files, read_image, read_sequence, FrameSequence, GrayImage};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub name: String,
    pub blur: PathBuf,
    pub sharp: PathBuf,
}

#[derive(Debug, Default)]
pub struct Dataset {
    pub root: PathBuf,
    pub frames: Option<FrameSequence>,
    pub events: Option<EventStream>,
    pub events_path: Option<PathBuf>,
    pub pairs: Vec<ImagePair>,
}

impl Dataset {
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if let Some(f) = &self.frames {
            let (h, w) = f.dims();
            parts.push(format!("{} frames ({w}x{h})", f.len()));
        }
        if let Some(e) = &self.events {
            parts.push(format!("{} events", e.len()));
        }
        if !self.pairs.is_empty() {
            parts.push(format!("{} blur/sharp pairs", self.pairs.len()));
        }
        if parts.is_empty() {
            "nothing".into()
        } else {
            parts.join(", ")
        }
    }

    /// First blurred image, if any pairs exist.
    pub fn first_blur(&self) -> Result<Option<GrayImage>> {
        self.pairs.first().map(|p| read_image(&p.blur).map_err(Error::from)).transpose()
    }

    /// Largest deviation between the first blurred image and the mean of
    /// the frames, when both are present.
    pub fn blur_mismatch(&self) -> Result<Option<f64>> {
        let (Some(seq), Some(blur)) = (&self.frames, self.first_blur()?) else {
            return Ok(None);
        };
        let synth = synthesize_blur(seq)?;
        Ok(Some(synth.max_abs_diff(&blur)?))
    }
}

fn image_names(dir: &Path) -> Result<BTreeSet<String>> {
    Ok(list_frame_files(dir)?
        .iter()
        .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(str::to_string))
        .collect())
}

pub fn pair_images(blur_dir: &Path, sharp_dir: &Path) -> Result<Vec<ImagePair>> {
    let blur = image_names(blur_dir)?;
    let sharp = image_names(sharp_dir)?;
    if let Some(extra) = blur.difference(&sharp).next() {
        return Err(Error::Input(format!(
            "{} has no partner in {} ({} blurred vs {} sharp images)",
            blur_dir.join(extra).display(),
            sharp_dir.display(),
            blur.len(),
            sharp.len()
        )));
    }
    if let Some(extra) = sharp.difference(&blur).next() {
        return Err(Error::Input(format!(
            "{} has no partner in {} ({} blurred vs {} sharp images)",
            sharp_dir.join(extra).display(),
            blur_dir.display(),
            blur.len(),
            sharp.len()
        )));
    }
    Ok(blur
        .into_iter()
        .map(|name| ImagePair {
            blur: blur_dir.join(&name),
            sharp: sharp_dir.join(&name),
            name,
        })
        .collect())
}

pub fn ingest_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Input(format!("{} is not a dataset directory", root.display())));
    }
    let mut ds = Dataset {
        root: root.to_path_buf(),
        ..Dataset::default()
    };
    let frames = root.join("frames");
    if frames.is_dir() {
        ds.frames = Some(read_sequence(&frames)?);
    }

    let mut evt: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "evt"))
        .collect();
    evt.sort();
    match evt.as_slice() {
        [] => {}
        [one] => {
            ds.events = Some(EventStream::read(one)?);
            ds.events_path = Some(one.clone());
        }
        many => {
            return Err(Error::Input(format!(
                "{} holds {} event files; expected at most one",
                root.display(),
                many.len()
            )))
        }
    }

    let (blur, sharp) = (root.join("blur"), root.join("sharp"));
    match (blur.is_dir(), sharp.is_dir()) {
        (true, true) => ds.pairs = pair_images(&blur, &sharp)?,
        (false, false) => {}
        (true, false) => return Err(Error::Input(format!("{} has no matching sharp/ directory", blur.display()))),
        (false, true) => return Err(Error::Input(format!("{} has no matching blur/ directory", sharp.display()))),
    }
    Ok(ds)
}
