//! Text embedding file: a `<vocab_size> <dim>` header, then one
//! `<token> <v1> ... <vd>` line per token in vocabulary order. Values are
//! written with 9 significant digits, enough to recover every `f32` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::NodeVectors;
use crate::error::{Error, Result};

pub fn write_vectors<W: Write>(mut w: W, vectors: &NodeVectors) -> std::io::Result<()> {
    writeln!(w, "{} {}", vectors.len(), vectors.dim())?;
    for (i, token) in vectors.vocab().iter().enumerate() {
        w.write_all(token.as_bytes())?;
        for x in vectors.row(i) {
            write!(w, " {x:.8e}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_vectors<R: BufRead>(reader: R) -> Result<NodeVectors> {
    let mut lines = reader.lines();
    let io = |e: std::io::Error| Error::Malformed(format!("embedding file: {e}"));
    let header = lines.next().ok_or(Error::Empty("embedding file"))?.map_err(io)?;
    let mut it = header.split_whitespace();
    let parse_usize = |s: Option<&str>| -> Result<usize> {
        s.and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Malformed(format!("bad embedding header `{header}`")))
    };
    let n = parse_usize(it.next())?;
    let dim = parse_usize(it.next())?;
    let mut vocab = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    for (k, line) in lines.enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap_or_default().to_string();
        let before = data.len();
        for p in parts {
            let v: f32 = p
                .parse()
                .map_err(|_| Error::Malformed(format!("embedding line {}: bad value `{p}`", k + 2)))?;
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: data.len() - before,
            });
        }
        vocab.push(token);
    }
    if vocab.len() != n {
        return Err(Error::Malformed(format!(
            "embedding header announces {n} tokens, found {}",
            vocab.len()
        )));
    }
    NodeVectors::new(vocab, dim, data)
}

impl NodeVectors {
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::ingest::write_file(path, |w| write_vectors(w, self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        read_vectors(BufReader::new(f))
    }
}
