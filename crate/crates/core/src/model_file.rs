//! Line-oriented text persistence for a trained pipeline.
//!
//! ```text
//! # csom model file
//! version 1
//! [meta]
//! <key> <value>
//! [fisher]
//! dims <S> <k> <d>
//! mean <S values>
//! pca <k values>            (S lines)
//! lda <d values>            (k lines)
//! [map class=<id>]          (or [map pooled])
//! grid <rows> <cols> <dim>
//! w <dim values>            (rows*cols lines, unit-major)
//! checksum <16 hex digits>
//! ```
//!
//! Numbers use 17 significant digits. The checksum is 64-bit FNV-1a over
//! every byte preceding the checksum line.

use std::path::Path;

use nalgebra::DMatrix;

use crate::csom::{CsomModel, TransformMode};
use crate::dataset::{format_f64, ClassId, Dataset, FeatureVector};
use crate::error::{Error, Result};
use crate::fisher::FisherProjection;
use crate::som::SomMap;

pub const FORMAT_VERSION: u32 = 1;
const HEADER_COMMENT: &str = "# csom model file";

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelMaps {
    Concurrent(CsomModel),
    Pooled(SomMap),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    /// Free-form configuration echo; keys contain no whitespace.
    pub metadata: Vec<(String, String)>,
    pub fisher: Option<FisherProjection>,
    pub maps: ModelMaps,
}

fn write_values(out: &mut String, tag: &str, values: impl IntoIterator<Item = f64>) {
    out.push_str(tag);
    for v in values {
        out.push(' ');
        out.push_str(&format_f64(v));
    }
    out.push('\n');
}

fn write_map(out: &mut String, header: &str, map: &SomMap) {
    out.push_str(header);
    out.push('\n');
    out.push_str(&format!(
        "grid {} {} {}\n",
        map.rows(),
        map.cols(),
        map.dim()
    ));
    for p in map.prototypes() {
        write_values(out, "w", p.iter().copied());
    }
}

impl ModelFile {
    pub fn feature_dim(&self) -> usize {
        match &self.maps {
            ModelMaps::Concurrent(m) => m.dim(),
            ModelMaps::Pooled(m) => m.dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.fisher
            .as_ref()
            .map_or(self.feature_dim(), FisherProjection::input_dim)
    }

    pub fn map_count(&self) -> usize {
        match &self.maps {
            ModelMaps::Concurrent(m) => m.entries().len(),
            ModelMaps::Pooled(_) => 1,
        }
    }

    /// Every prototype held by the model.
    pub fn prototypes(&self) -> Vec<&[f64]> {
        match &self.maps {
            ModelMaps::Concurrent(m) => m
                .entries()
                .iter()
                .flat_map(|(_, map)| map.prototypes())
                .collect(),
            ModelMaps::Pooled(map) => map.prototypes().collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER_COMMENT}\nversion {FORMAT_VERSION}\n[meta]\n");
        for (k, v) in &self.metadata {
            out.push_str(&format!("{k} {v}\n"));
        }
        if let Some(f) = &self.fisher {
            out.push_str("[fisher]\n");
            out.push_str(&format!(
                "dims {} {} {}\n",
                f.input_dim(),
                f.pca_dim(),
                f.output_dim()
            ));
            write_values(&mut out, "mean", f.mean().iter().copied());
            for row in f.pca_basis().row_iter() {
                write_values(&mut out, "pca", row.iter().copied());
            }
            for row in f.lda_basis().row_iter() {
                write_values(&mut out, "lda", row.iter().copied());
            }
        }
        match &self.maps {
            ModelMaps::Concurrent(model) => {
                for (class, map) in model.entries() {
                    write_map(&mut out, &format!("[map class={class}]"), map);
                }
            }
            ModelMaps::Pooled(map) => write_map(&mut out, "[map pooled]", map),
        }
        let sum = fnv1a64(out.as_bytes());
        out.push_str(&format!("checksum {sum:016x}\n"));
        out
    }

    pub fn parse(text: &str) -> Result<ModelFile> {
        let body_end = text
            .rfind("checksum ")
            .filter(|&i| i == 0 || text.as_bytes()[i - 1] == b'\n')
            .ok_or_else(|| Error::Integrity("checksum line missing".to_owned()))?;
        let (body, tail) = text.split_at(body_end);
        let stated = tail
            .strip_prefix("checksum ")
            .and_then(|t| t.strip_suffix('\n'))
            .filter(|h| h.len() == 16)
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .ok_or_else(|| Error::Integrity("malformed checksum line".to_owned()))?;
        let actual = fnv1a64(body.as_bytes());
        if stated != actual {
            return Err(Error::Integrity(format!(
                "checksum mismatch: file says {stated:016x}, content hashes to {actual:016x}"
            )));
        }
        Parser::new(body).parse()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelFile::parse(&text)
    }

    /// Applies the stored Fisher projection, if any.
    pub fn project(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: data.dim(),
            });
        }
        match &self.fisher {
            Some(f) => f.project_dataset(data),
            None => Ok(data.clone()),
        }
    }

    /// Projects, then replaces or appends each row's winning prototype.
    pub fn transform(&self, data: &Dataset, mode: TransformMode) -> Result<Dataset> {
        let reduced = self.project(data)?;
        match &self.maps {
            ModelMaps::Concurrent(model) => model.transform(&reduced, mode),
            ModelMaps::Pooled(map) => {
                let rows = reduced
                    .rows()
                    .iter()
                    .map(|r| {
                        let proto = map.nearest_prototype(r)?;
                        Ok(match mode {
                            TransformMode::Replace => proto,
                            TransformMode::Append => {
                                let mut v = r.values.clone();
                                v.extend(proto.values);
                                FeatureVector::new(v, r.label)
                            }
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Dataset::new(rows)
            }
        }
    }

    pub fn concurrent(&self) -> Result<&CsomModel> {
        match &self.maps {
            ModelMaps::Concurrent(m) => Ok(m),
            ModelMaps::Pooled(_) => Err(Error::Model(
                "a pooled single-map model cannot classify; train without --single-som".to_owned(),
            )),
        }
    }
}

struct Parser<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

fn format_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("model line {}: {msg}", line + 1))
}

impl<'a> Parser<'a> {
    fn new(body: &'a str) -> Self {
        Self {
            lines: body.lines().enumerate().peekable(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.lines
            .next()
            .ok_or_else(|| Error::Format(format!("model ends before {what}")))
    }

    /// Next line, which must start with `tag`; returns the remaining fields.
    fn tagged(&mut self, tag: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, line) = self.next_line(tag)?;
        let mut fields = line.split(' ');
        if fields.next() != Some(tag) {
            return Err(format_err(n, format!("expected `{tag}`")));
        }
        Ok((n, fields.collect()))
    }

    fn numbers(&mut self, tag: &str, count: usize) -> Result<Vec<f64>> {
        let (n, fields) = self.tagged(tag)?;
        if fields.len() != count {
            return Err(format_err(
                n,
                format!("expected {count} values, found {}", fields.len()),
            ));
        }
        fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| format_err(n, format!("bad number {f:?}")))
            })
            .collect()
    }

    fn uints(&mut self, tag: &str, count: usize) -> Result<Vec<usize>> {
        let (n, fields) = self.tagged(tag)?;
        if fields.len() != count {
            return Err(format_err(n, format!("expected {count} integers")));
        }
        fields
            .iter()
            .map(|f| {
                f.parse::<usize>()
                    .map_err(|_| format_err(n, format!("bad integer {f:?}")))
            })
            .collect()
    }

    fn parse(mut self) -> Result<ModelFile> {
        let (n, first) = self.next_line("header")?;
        if first != HEADER_COMMENT {
            return Err(format_err(n, "missing model header comment"));
        }
        let (n, version) = self.tagged("version")?;
        if version != [FORMAT_VERSION.to_string().as_str()] {
            return Err(format_err(n, format!("unsupported version {version:?}")));
        }
        let (n, meta) = self.next_line("[meta]")?;
        if meta != "[meta]" {
            return Err(format_err(n, "expected [meta]"));
        }
        let mut metadata = Vec::new();
        while let Some(&(n, line)) = self.lines.peek() {
            if line.starts_with('[') {
                break;
            }
            self.lines.next();
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| format_err(n, "metadata needs a key and value"))?;
            metadata.push((k.to_owned(), v.to_owned()));
        }

        let mut fisher = None;
        if matches!(self.lines.peek(), Some((_, "[fisher]"))) {
            self.lines.next();
            let dims = self.uints("dims", 3)?;
            let (s, k, d) = (dims[0], dims[1], dims[2]);
            let mean = self.numbers("mean", s)?;
            let mut pca = Vec::with_capacity(s * k);
            for _ in 0..s {
                pca.extend(self.numbers("pca", k)?);
            }
            let mut lda = Vec::with_capacity(k * d);
            for _ in 0..k {
                lda.extend(self.numbers("lda", d)?);
            }
            fisher = Some(FisherProjection::from_parts(
                mean,
                DMatrix::from_row_slice(s, k, &pca),
                DMatrix::from_row_slice(k, d, &lda),
            )?);
        }

        let mut class_maps: Vec<(ClassId, SomMap)> = Vec::new();
        let mut pooled = None;
        while let Some((n, header)) = self.lines.next() {
            let target = header
                .strip_prefix("[map ")
                .and_then(|h| h.strip_suffix(']'))
                .ok_or_else(|| format_err(n, format!("unexpected line {header:?}")))?;
            let grid = self.uints("grid", 3)?;
            let (rows, cols, dim) = (grid[0], grid[1], grid[2]);
            let mut protos = Vec::with_capacity(rows * cols * dim);
            for _ in 0..rows * cols {
                protos.extend(self.numbers("w", dim)?);
            }
            let map = SomMap::from_prototypes(rows, cols, dim, protos)?;
            if target == "pooled" {
                if pooled.is_some() || !class_maps.is_empty() {
                    return Err(format_err(n, "a pooled map must be the only map"));
                }
                pooled = Some(map);
            } else {
                if pooled.is_some() {
                    return Err(format_err(n, "a pooled map must be the only map"));
                }
                let class = target
                    .strip_prefix("class=")
                    .and_then(|c| c.parse::<u32>().ok())
                    .ok_or_else(|| format_err(n, format!("bad map target {target:?}")))?;
                class_maps.push((ClassId(class), map));
            }
        }
        let maps = match pooled {
            Some(map) => ModelMaps::Pooled(map),
            None if class_maps.is_empty() => {
                return Err(Error::Format("model holds no maps".to_owned()))
            }
            None => ModelMaps::Concurrent(CsomModel::new(class_maps)?),
        };
        let file = ModelFile {
            metadata,
            fisher,
            maps,
        };
        if let Some(f) = &file.fisher {
            if f.output_dim() != file.feature_dim() {
                return Err(Error::Model(format!(
                    "fisher output dimension {} does not match map dimension {}",
                    f.output_dim(),
                    file.feature_dim()
                )));
            }
        }
        Ok(file)
    }
}
