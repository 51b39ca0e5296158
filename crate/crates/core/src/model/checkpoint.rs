use std::collections::{BTreeMap, HashMap};

use super::ngram::{ContextStats, NgramModel};
use super::transformer::{Layout, TransformerShape};
use super::{Backend, GeneratorParams, ModelError, TransformerModel};

pub const FTSG_MAGIC: &[u8; 4] = b"FTSG";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Largest integer an f32 tensor entry stores exactly.
const F32_EXACT: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Downgrade a fingerprint mismatch to a logged warning.
    pub allow_fingerprint_mismatch: bool,
}

struct Tensor {
    name: String,
    dims: Vec<u32>,
    data: Vec<f32>,
}

pub(crate) fn serialize(params: &GeneratorParams) -> Vec<u8> {
    let (header, tensors) = match params {
        GeneratorParams::Ngram(m) => ngram_tensors(m),
        GeneratorParams::Transformer(m) => transformer_tensors(m),
    };
    let mut out = Vec::new();
    out.extend_from_slice(FTSG_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(params.backend().tag());
    out.extend_from_slice(&params.fingerprint().to_le_bytes());
    let header: String = header.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.dims.len() as u8);
        for d in &t.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn ngram_tensors(m: &NgramModel) -> (Vec<(String, String)>, Vec<Tensor>) {
    let header = vec![
        ("backend".to_string(), "ngram".to_string()),
        ("order".to_string(), m.order.to_string()),
        ("alpha".to_string(), format!("{:?}", m.alpha)),
        ("vocab_size".to_string(), m.vocab_size.to_string()),
    ];
    let tensors = m
        .tables
        .iter()
        .enumerate()
        .map(|(k, table)| {
            let mut rows: Vec<(&[u32], u32, u64)> = table
                .iter()
                .flat_map(|(ctx, s)| s.next.iter().map(move |&(w, c)| (&ctx[..], w, c)))
                .collect();
            rows.sort_unstable();
            let width = k + 2;
            let mut data = Vec::with_capacity(rows.len() * width);
            for (ctx, w, c) in &rows {
                assert!(*c <= F32_EXACT, "n-gram count {c} exceeds the exact f32 range");
                data.extend(ctx.iter().map(|&x| x as f32));
                data.push(*w as f32);
                data.push(*c as f32);
            }
            Tensor { name: format!("ngram.{k}"), dims: vec![rows.len() as u32, width as u32], data }
        })
        .collect();
    (header, tensors)
}

fn transformer_tensors(m: &TransformerModel) -> (Vec<(String, String)>, Vec<Tensor>) {
    let s = m.layout.shape;
    let statics: Vec<String> = m.static_ids.iter().map(u32::to_string).collect();
    let header = vec![
        ("backend".to_string(), "transformer".to_string()),
        ("vocab_size".to_string(), s.vocab_size.to_string()),
        ("context".to_string(), s.context.to_string()),
        ("d_model".to_string(), s.d_model.to_string()),
        ("heads".to_string(), s.heads.to_string()),
        ("layers".to_string(), s.layers.to_string()),
        ("static_ids".to_string(), statics.join(",")),
    ];
    let tensors = m
        .layout
        .tensors
        .iter()
        .map(|t| Tensor {
            name: t.name.clone(),
            dims: t.shape.iter().map(|&d| d as u32).collect(),
            data: m.params[t.offset..t.offset + t.len()].to_vec(),
        })
        .collect();
    (header, tensors)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| ModelError::ShapeMismatch("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn shape_err(m: impl Into<String>) -> ModelError {
    ModelError::ShapeMismatch(m.into())
}

pub(crate) fn deserialize(bytes: &[u8]) -> Result<GeneratorParams, ModelError> {
    if bytes.len() < 4 || &bytes[..4] != FTSG_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::VersionUnsupported(version));
    }
    let tag = r.u8()?;
    let fingerprint = r.u64()?;
    let hlen = r.u32()? as usize;
    let header_text =
        std::str::from_utf8(r.take(hlen)?).map_err(|_| shape_err("header is not UTF-8"))?;
    let mut header = BTreeMap::new();
    for line in header_text.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| shape_err(format!("bad header line `{line}`")))?;
        header.insert(k.to_string(), v.to_string());
    }
    let mut tensors = Vec::new();
    while !r.done() {
        let nlen = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| shape_err("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let count = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d as usize))
            .ok_or_else(|| shape_err("tensor too large"))?;
        let raw = r.take(count.checked_mul(4).ok_or_else(|| shape_err("tensor too large"))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push(Tensor { name, dims, data });
    }
    let get = |k: &str| header.get(k).ok_or_else(|| shape_err(format!("header lacks `{k}`")));
    let get_usize = |k: &str| -> Result<usize, ModelError> {
        get(k)?.parse().map_err(|_| shape_err(format!("header `{k}` is not an integer")))
    };
    let backend = match tag {
        0 => Backend::Ngram,
        1 => Backend::Transformer,
        t => return Err(shape_err(format!("unknown backend tag {t}"))),
    };
    let declared = get("backend")?;
    let expected = if backend == Backend::Ngram { "ngram" } else { "transformer" };
    if declared != expected {
        return Err(shape_err("backend tag disagrees with header"));
    }
    match backend {
        Backend::Ngram => {
            let order = get_usize("order")?;
            let vocab_size = get_usize("vocab_size")?;
            let alpha: f64 = get("alpha")?.parse().map_err(|_| shape_err("bad alpha"))?;
            if order == 0 || !(alpha > 0.0) || tensors.len() != order {
                return Err(shape_err("n-gram header and tensors disagree"));
            }
            let mut tables = Vec::with_capacity(order);
            for (k, t) in tensors.iter().enumerate() {
                let width = k + 2;
                if t.name != format!("ngram.{k}") || t.dims.len() != 2 || t.dims[1] as usize != width {
                    return Err(shape_err(format!("unexpected tensor `{}`", t.name)));
                }
                let mut table: HashMap<Box<[u32]>, ContextStats> = HashMap::new();
                let mut prev: Option<&[f32]> = None;
                for row in t.data.chunks_exact(width) {
                    if let Some(p) = prev {
                        if p.partial_cmp(row) != Some(std::cmp::Ordering::Less) {
                            return Err(shape_err("n-gram rows are not strictly sorted"));
                        }
                    }
                    prev = Some(row);
                    let mut ids = Vec::with_capacity(width);
                    for &x in row {
                        if !(x >= 0.0 && x.fract() == 0.0 && (x as u64) <= F32_EXACT) {
                            return Err(shape_err("n-gram entries must be non-negative integers"));
                        }
                        ids.push(x as u32);
                    }
                    let count = u64::from(ids[width - 1]);
                    let w = ids[width - 2];
                    if ids[..width - 1].iter().any(|&i| i as usize >= vocab_size) || count == 0 {
                        return Err(shape_err("n-gram row out of range"));
                    }
                    let stats = table.entry(ids[..k].into()).or_default();
                    stats.total += count;
                    stats.next.push((w, count));
                }
                tables.push(table);
            }
            Ok(GeneratorParams::Ngram(NgramModel { order, alpha, vocab_size, fingerprint, tables }))
        }
        Backend::Transformer => {
            let shape = TransformerShape {
                vocab_size: get_usize("vocab_size")?,
                context: get_usize("context")?,
                d_model: get_usize("d_model")?,
                heads: get_usize("heads")?,
                layers: get_usize("layers")?,
            };
            shape.validate()?;
            let static_ids = get("static_ids")?
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<u32>().map_err(|_| shape_err("bad static id")))
                .collect::<Result<Vec<_>, _>>()?;
            let layout = Layout::new(shape);
            if tensors.len() != layout.tensors.len() {
                return Err(shape_err(format!(
                    "expected {} tensors, found {}",
                    layout.tensors.len(),
                    tensors.len()
                )));
            }
            let mut params = vec![0.0f32; layout.total];
            for (want, got) in layout.tensors.iter().zip(&tensors) {
                let dims: Vec<usize> = got.dims.iter().map(|&d| d as usize).collect();
                if want.name != got.name || want.shape != dims {
                    return Err(shape_err(format!(
                        "tensor `{}` {:?} where `{}` {:?} was expected",
                        got.name, dims, want.name, want.shape
                    )));
                }
                params[want.offset..want.offset + want.len()].copy_from_slice(&got.data);
            }
            Ok(GeneratorParams::Transformer(TransformerModel { layout, fingerprint, static_ids, params }))
        }
    }
}

pub(crate) fn load(
    bytes: &[u8],
    fingerprint: u64,
    vocab_size: usize,
    options: LoadOptions,
) -> Result<GeneratorParams, ModelError> {
    let params = deserialize(bytes)?;
    if params.fingerprint() != fingerprint {
        let err = ModelError::FingerprintMismatch { expected: fingerprint, found: params.fingerprint() };
        if !options.allow_fingerprint_mismatch {
            return Err(err);
        }
        log::warn!("{err}; loading anyway");
    }
    if params.vocab_size() != vocab_size {
        return Err(shape_err(format!(
            "checkpoint vocabulary has {} tokens, expected {vocab_size}",
            params.vocab_size()
        )));
    }
    Ok(params)
}
