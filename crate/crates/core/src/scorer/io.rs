use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scorer::features::Vocab;
use crate::scorer::model::{Hyperparams, NGramLinearClassifier};

pub const MODEL_MAGIC: &[u8; 8] = b"BETRNGC1";

// Layout, little-endian throughout:
//   magic | u32 len + JSON hyperparams | u32 vocab size
//   | vocab entries (u16 len, utf-8 word, u64 count) | u64 input len | f32 input
//   | f32 output (2 × dim)

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

impl NGramLinearClassifier {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        let hyper = serde_json::to_vec(&self.hyper)?;
        w.write_all(&(hyper.len() as u32).to_le_bytes())?;
        w.write_all(&hyper)?;
        w.write_all(&(self.vocab.len() as u32).to_le_bytes())?;
        for (word, count) in self.vocab.entries() {
            let len = u16::try_from(word.len()).map_err(|_| {
                Error::Format(format!("vocabulary word too long: {} bytes", word.len()))
            })?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(word.as_bytes())?;
            w.write_all(&count.to_le_bytes())?;
        }
        w.write_all(&(self.input.len() as u64).to_le_bytes())?;
        for v in self.input.iter().chain(&self.output) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        if &read_exact::<8>(r)? != MODEL_MAGIC {
            return Err(Error::Format("not a classifier model file".into()));
        }
        let hyper_len = u32::from_le_bytes(read_exact(r)?) as usize;
        let mut hyper = vec![0u8; hyper_len];
        r.read_exact(&mut hyper)?;
        let hyper: Hyperparams = serde_json::from_slice(&hyper)?;
        let n_vocab = u32::from_le_bytes(read_exact(r)?) as usize;
        let mut entries = Vec::with_capacity(n_vocab);
        for _ in 0..n_vocab {
            let len = u16::from_le_bytes(read_exact(r)?) as usize;
            let mut word = vec![0u8; len];
            r.read_exact(&mut word)?;
            let word = String::from_utf8(word)
                .map_err(|_| Error::Format("vocabulary word is not utf-8".into()))?;
            let count = u64::from_le_bytes(read_exact(r)?);
            entries.push((word, count));
        }
        let vocab = Vocab::from_entries(entries);
        let n_input = u64::from_le_bytes(read_exact(r)?) as usize;
        let expected = (vocab.len() + hyper.bucket_count) * hyper.dim;
        if n_input != expected {
            return Err(Error::Format(format!(
                "input matrix has {n_input} weights, expected {expected}"
            )));
        }
        let input = read_f32s(r, n_input)?;
        let output = read_f32s(r, 2 * hyper.dim)?;
        Ok(NGramLinearClassifier {
            hyper,
            vocab,
            input,
            output,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }
}
