//! `FFM1` checkpoints: magic, a length-prefixed `key=value` header holding the
//! model config (and run notes), then named `FFT1` tensors with a frozen flag.

use std::io::{Read, Write};
use std::path::Path;

use super::{Model, ModelConfig, Params};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::tensor::io::{tensor_bytes, Cursor, DType};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FFM1";

/// A model plus free-form header notes (e.g. the optimizer used).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub notes: KeyValues,
}

fn header(model: &Model, notes: &KeyValues) -> String {
    let mut text = model.config.to_kv().to_text();
    for (k, v) in notes.iter() {
        text.push_str(&format!("note.{k}={v}\n"));
    }
    text
}

pub fn write_checkpoint<W: Write>(w: &mut W, model: &Model, notes: &KeyValues) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    let head = header(model, notes);
    w.write_all(&(head.len() as u32).to_le_bytes())?;
    w.write_all(head.as_bytes())?;
    let named = model.params.named();
    w.write_all(&(named.len() as u32).to_le_bytes())?;
    for (name, t) in named {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[u8::from(!t.requires_grad())])?;
        w.write_all(&tensor_bytes(t, DType::F64))?;
    }
    Ok(())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_checkpoint(&mut out, &self.model, &self.notes).expect("Vec writer");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint> {
    let mut c = Cursor::new(r);
    c.expect_magic(CHECKPOINT_MAGIC)?;
    let len = c.u32()? as usize;
    let at = c.offset();
    let text = String::from_utf8(c.bytes(len)?).map_err(|_| Error::format(at, "header is not UTF-8"))?;
    let kv = KeyValues::parse(&text)?;
    let mut config = ModelConfig::default();
    config.apply_kv(&kv)?;
    let mut notes = KeyValues::new();
    for (k, v) in kv.iter() {
        if let Some(k) = k.strip_prefix("note.") {
            notes.set(k, v);
        }
    }
    // fresh params give the expected names, shapes and frozen flags
    let mut params = Params::init(&config, 0);
    let expected: Vec<(String, Vec<usize>, bool)> = params
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec(), !t.requires_grad()))
        .collect();
    let at = c.offset();
    let count = c.u32()? as usize;
    if count != expected.len() {
        return Err(Error::format(
            at,
            format!("checkpoint holds {count} tensors, config implies {}", expected.len()),
        ));
    }
    for ((name, shape, frozen), slot) in expected.into_iter().zip(params.tensors_mut()) {
        let at = c.offset();
        let n = c.u32()? as usize;
        let got = String::from_utf8(c.bytes(n)?).map_err(|_| Error::format(at, "bad tensor name"))?;
        if got != name {
            return Err(Error::format(at, format!("expected tensor {name}, found {got}")));
        }
        let flag_at = c.offset();
        if (c.u8()? != 0) != frozen {
            return Err(Error::format(flag_at, format!("frozen flag mismatch for {name}")));
        }
        let at = c.offset();
        let (t, _) = c.tensor()?;
        if t.shape() != shape.as_slice() {
            return Err(Error::format(
                at,
                format!("{name} has shape {:?}, expected {shape:?}", t.shape()),
            ));
        }
        *slot = t.with_grad(!frozen);
    }
    if !c.at_end()? {
        return Err(Error::format(c.offset(), "trailing bytes after last tensor"));
    }
    Ok(Checkpoint {
        model: Model { config, params },
        notes,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Serialized bytes of every frozen tensor, in checkpoint order.
pub fn frozen_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, t) in model.params.named() {
        if !t.requires_grad() {
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&tensor_bytes(t, DType::F64));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HeadMode;

    fn small() -> Model {
        Model::new(
            ModelConfig {
                frames: 8,
                latent: 16,
                head_mode: HeadMode::FourClass,
                head_hidden: 32,
                ..ModelConfig::default()
            },
            11,
        )
        .unwrap()
    }

    #[test]
    fn reload_is_bit_exact() {
        let mut notes = KeyValues::new();
        notes.set("optimizer", "adamw");
        let ck = Checkpoint {
            model: small(),
            notes,
        };
        let bytes = ck.to_bytes();
        let back = read_checkpoint(&bytes[..]).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.notes.get("optimizer"), Some("adamw"));
        assert!(!back.model.params.fau_enc.w1.requires_grad());
        assert!(back.model.params.query.requires_grad());
    }

    #[test]
    fn damaged_checkpoints_are_rejected() {
        let bytes = Checkpoint {
            model: small(),
            notes: KeyValues::new(),
        }
        .to_bytes();
        assert!(matches!(read_checkpoint(&b"FFC1xxxx"[..]), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(
            read_checkpoint(&bytes[..bytes.len() - 3]),
            Err(Error::Format { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(read_checkpoint(&extra[..]), Err(Error::Format { .. })));
    }
}
