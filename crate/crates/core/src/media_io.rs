//! Binary PPM (P6) frames, 16-bit PGM (P5) label frames and Middlebury `.flo`
//! flow files.
//!
//! Frame sequences are addressed by printf-style patterns such as
//! `frames/%05d.ppm`; indices must be contiguous from the first index.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;

use crate::error::{Error, Result};
use crate::image::{FlowField, Frame, FrameSequence, LabelVolume, Rgb};
use crate::rng::mix;

/// Magic number opening every `.flo` file ("PIEH" as little-endian f32).
pub const FLO_MAGIC: f32 = 202021.25;

/// A printf-style frame path pattern with exactly one `%d` / `%0Nd` field.
#[derive(Debug, Clone)]
pub struct FramePattern {
    dir: PathBuf,
    prefix: String,
    suffix: String,
    pad: usize,
}

impl FramePattern {
    pub fn parse(pattern: &str) -> Result<Self> {
        let path = Path::new(pattern);
        let file = path
            .file_name()
            .and_then(|f| f.to_str())
            .ok_or_else(|| Error::Format(format!("pattern '{pattern}' has no file name")))?;
        let dir = path
            .parent()
            .map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p })
            .unwrap_or(Path::new("."))
            .to_path_buf();
        let field = Regex::new(r"%(0?)(\d*)d").expect("static regex");
        let mut matches = field.find_iter(file);
        let m = matches
            .next()
            .ok_or_else(|| Error::Format(format!("pattern '{pattern}' has no %d field")))?;
        if matches.next().is_some() {
            return Err(Error::Format(format!("pattern '{pattern}' has more than one %d field")));
        }
        let caps = field.captures(m.as_str()).expect("matched above");
        let pad = if caps[1].is_empty() {
            0
        } else {
            caps[2].parse().unwrap_or(0)
        };
        Ok(Self {
            dir,
            prefix: file[..m.start()].to_string(),
            suffix: file[m.end()..].to_string(),
            pad,
        })
    }

    pub fn path_for(&self, index: usize) -> PathBuf {
        self.dir.join(format!(
            "{}{:0width$}{}",
            self.prefix,
            index,
            self.suffix,
            width = self.pad
        ))
    }

    /// Indices of all existing files that match the pattern.
    pub fn existing_indices(&self) -> Result<BTreeSet<usize>> {
        let re = Regex::new(&format!(
            "^{}(\\d+){}$",
            regex::escape(&self.prefix),
            regex::escape(&self.suffix)
        ))
        .expect("escaped regex");
        let entries = match fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeSet::new()),
            Err(e) => return Err(Error::io(&self.dir, e)),
        };
        let mut out = BTreeSet::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if let Some(c) = re.captures(name) {
                let digits = &c[1];
                if self.pad > 0 && digits.len() < self.pad {
                    continue;
                }
                if let Ok(i) = digits.parse::<usize>() {
                    if self.path_for(i).file_name() == Some(name.as_ref()) {
                        out.insert(i);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Contiguous index range starting at `first`, or an error naming the gap.
    pub fn contiguous_range(&self, first: usize) -> Result<std::ops::Range<usize>> {
        let indices: Vec<usize> = self.existing_indices()?.into_iter().filter(|&i| i >= first).collect();
        let Some(&last) = indices.last() else {
            return Err(Error::Missing(format!(
                "no frames found matching {}",
                self.path_for(first).display()
            )));
        };
        for (expected, &found) in (first..).zip(&indices) {
            if expected != found {
                return Err(Error::Missing(format!(
                    "frame index {expected} missing ({})",
                    self.path_for(expected).display()
                )));
            }
        }
        Ok(first..last + 1)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct PnmHeader {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_offset: usize,
}

fn parse_pnm_header(bytes: &[u8], path: &Path) -> Result<PnmHeader> {
    let fmt_err = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 2 {
        return Err(fmt_err("truncated header"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and '#' comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(fmt_err("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(fmt_err("malformed header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fmt_err("malformed header field"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(fmt_err("missing whitespace after maxval"));
    }
    Ok(PnmHeader {
        magic,
        width: fields[0],
        height: fields[1],
        maxval: fields[2],
        data_offset: pos + 1,
    })
}

pub fn encode_ppm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.reserve(frame.pixels().len() * 3);
    for p in frame.pixels() {
        out.extend_from_slice(p);
    }
    out
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<Frame> {
    let h = parse_pnm_header(bytes, path)?;
    if &h.magic != b"P6" {
        return Err(Error::Format(format!("{}: not a binary PPM (P6)", path.display())));
    }
    if h.maxval != 255 {
        return Err(Error::Format(format!(
            "{}: maxval {} unsupported, expected 255",
            path.display(),
            h.maxval
        )));
    }
    let n = h.width * h.height;
    let data = bytes
        .get(h.data_offset..h.data_offset + 3 * n)
        .ok_or_else(|| Error::Format(format!("{}: truncated pixel data", path.display())))?;
    let pixels = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Frame::new(h.width, h.height, pixels).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn read_ppm(path: &Path) -> Result<Frame> {
    decode_ppm(&read_file(path)?, path)
}

pub fn write_ppm(path: &Path, frame: &Frame) -> Result<()> {
    write_file(path, &encode_ppm(frame))
}

/// 16-bit big-endian PGM of one label frame.
pub fn encode_pgm16(width: usize, height: usize, labels: &[u32]) -> Result<Vec<u8>> {
    debug_assert_eq!(labels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(labels.len() * 2);
    for &l in labels {
        let l = u16::try_from(l)
            .map_err(|_| Error::Range(format!("label {l} exceeds the 16-bit PGM range")))?;
        out.extend_from_slice(&l.to_be_bytes());
    }
    Ok(out)
}

pub fn decode_pgm16(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u32>)> {
    let h = parse_pnm_header(bytes, path)?;
    if &h.magic != b"P5" {
        return Err(Error::Format(format!("{}: not a binary PGM (P5)", path.display())));
    }
    let n = h.width * h.height;
    let labels = if h.maxval > 255 {
        let data = bytes
            .get(h.data_offset..h.data_offset + 2 * n)
            .ok_or_else(|| Error::Format(format!("{}: truncated pixel data", path.display())))?;
        data.chunks_exact(2)
            .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
            .collect()
    } else {
        let data = bytes
            .get(h.data_offset..h.data_offset + n)
            .ok_or_else(|| Error::Format(format!("{}: truncated pixel data", path.display())))?;
        data.iter().map(|&b| u32::from(b)).collect()
    };
    Ok((h.width, h.height, labels))
}

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * flow.u().len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for (u, v) in flow.u().iter().zip(flow.v()) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowField> {
    let word = |i: usize| -> Result<[u8; 4]> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|s| [s[0], s[1], s[2], s[3]])
            .ok_or_else(|| Error::Format(format!("{}: truncated .flo file", path.display())))
    };
    let magic = f32::from_le_bytes(word(0)?);
    if magic != FLO_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad .flo magic {magic}, expected {FLO_MAGIC}",
            path.display()
        )));
    }
    let width = i32::from_le_bytes(word(1)?);
    let height = i32::from_le_bytes(word(2)?);
    if width <= 0 || height <= 0 {
        return Err(Error::Format(format!(
            "{}: invalid .flo dimensions {width}x{height}",
            path.display()
        )));
    }
    let (width, height) = (width as usize, height as usize);
    let n = width * height;
    if bytes.len() < 12 + 8 * n {
        return Err(Error::Format(format!("{}: truncated .flo payload", path.display())));
    }
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        u.push(f32::from_le_bytes(word(3 + 2 * i)?));
        v.push(f32::from_le_bytes(word(4 + 2 * i)?));
    }
    FlowField::new(width, height, u, v).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn load_flow(path: &Path) -> Result<FlowField> {
    decode_flo(&read_file(path)?, path)
}

pub fn write_flow(path: &Path, flow: &FlowField) -> Result<()> {
    write_file(path, &encode_flo(flow))
}

/// Loads every frame matching `pattern`, contiguous from `first_index`.
pub fn load_frame_sequence(pattern: &str, first_index: usize) -> Result<FrameSequence> {
    let pat = FramePattern::parse(pattern)?;
    let range = pat.contiguous_range(first_index)?;
    let frames = range
        .map(|i| read_ppm(&pat.path_for(i)))
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames)
}

/// Writes frames to `pattern`, numbering from `first_index`.
pub fn write_frame_sequence(pattern: &str, first_index: usize, seq: &FrameSequence) -> Result<()> {
    let pat = FramePattern::parse(pattern)?;
    ensure_dir(&pat.dir)?;
    for (t, frame) in seq.frames().iter().enumerate() {
        write_ppm(&pat.path_for(first_index + t), frame)?;
    }
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// File name used for frame `t` of a label volume directory.
pub fn label_frame_name(t: usize) -> String {
    format!("{t:05}.pgm")
}

/// Writes one 16-bit PGM per frame (`00000.pgm`, `00001.pgm`, ...).
pub fn write_label_volume(volume: &LabelVolume, dir: &Path) -> Result<Vec<PathBuf>> {
    if let Some(&l) = volume.labels().iter().find(|&&l| l > u32::from(u16::MAX)) {
        return Err(Error::Range(format!("label {l} exceeds the 16-bit PGM range")));
    }
    ensure_dir(dir)?;
    (0..volume.depth())
        .map(|t| {
            let path = dir.join(label_frame_name(t));
            let bytes = encode_pgm16(volume.width(), volume.height(), volume.frame(t))?;
            write_file(&path, &bytes)?;
            Ok(path)
        })
        .collect()
}

pub fn read_label_volume(dir: &Path) -> Result<LabelVolume> {
    let pattern = dir.join("%05d.pgm");
    let pat = FramePattern::parse(
        pattern
            .to_str()
            .ok_or_else(|| Error::Format(format!("non-utf8 path {}", dir.display())))?,
    )?;
    let range = pat.contiguous_range(0)?;
    let mut dims = None;
    let mut labels = Vec::new();
    for t in range.clone() {
        let path = pat.path_for(t);
        let (w, h, frame) = decode_pgm16(&read_file(&path)?, &path)?;
        match dims {
            None => dims = Some((w, h)),
            Some(d) if d != (w, h) => {
                return Err(Error::Format(format!(
                    "{}: label frame is {w}x{h}, expected {}x{}",
                    path.display(),
                    d.0,
                    d.1
                )))
            }
            _ => {}
        }
        labels.extend(frame);
    }
    let (w, h) = dims.expect("range is non-empty");
    LabelVolume::new(w, h, range.len(), labels)
}

/// Deterministic label -> color map; distinct labels get distinct colors.
pub fn label_palette(labels: impl IntoIterator<Item = u32>, seed: u64) -> HashMap<u32, Rgb> {
    let distinct: BTreeSet<u32> = labels.into_iter().collect();
    let mut used = BTreeSet::new();
    let mut palette = HashMap::with_capacity(distinct.len());
    for l in distinct {
        let mut attempt = 0u64;
        let color = loop {
            let h = mix(seed ^ mix(u64::from(l)).wrapping_add(attempt.wrapping_mul(0x9E37_79B9)));
            let c: Rgb = [(h >> 16) as u8, (h >> 24) as u8, (h >> 32) as u8];
            if used.insert(c) {
                break c;
            }
            attempt += 1;
        };
        palette.insert(l, color);
    }
    palette
}

pub fn colorize_labels(volume: &LabelVolume, seed: u64) -> FrameSequence {
    let palette = label_palette(volume.labels().iter().copied(), seed);
    let frames = (0..volume.depth())
        .map(|t| {
            let pixels = volume.frame(t).iter().map(|l| palette[l]).collect();
            Frame::new(volume.width(), volume.height(), pixels).expect("volume dims valid")
        })
        .collect();
    FrameSequence::new(frames).expect("uniform non-empty frames")
}
