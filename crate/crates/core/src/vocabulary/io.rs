//! `.dxv` binary vocabulary format.
//!
//! Header: magic `DXVB`, version, descriptor dimension, branching factor,
//! node count and word count (all u32 LE). Nodes follow in breadth-first
//! order as `(parent, first_child, num_children, is_leaf: u8, idf: f32,
//! centroid: dim x f32)`. Loading streams the file once, then checks the
//! layout.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use super::{Vocabulary, VocabNode};
use crate::binio::{count_u32, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const VOCAB_MAGIC: [u8; 4] = *b"DXVB";
pub const VOCAB_VERSION: u32 = 1;

const HEADER_BYTES: usize = 24;

fn node_bytes(dim: usize) -> usize {
    4 + 4 + 4 + 1 + 4 + 4 * dim
}

pub fn encode_vocabulary(vocab: &Vocabulary) -> Result<Vec<u8>> {
    let dim = vocab.dim();
    let mut w = ByteWriter::with_capacity(HEADER_BYTES + vocab.num_nodes() * node_bytes(dim));
    w.bytes(&VOCAB_MAGIC);
    w.u32(VOCAB_VERSION);
    w.u32(count_u32(dim, "dimension")?);
    w.u32(vocab.branching());
    w.u32(count_u32(vocab.num_nodes(), "node")?);
    w.u32(count_u32(vocab.num_words(), "word")?);
    for (i, n) in vocab.nodes().iter().enumerate() {
        w.u32(n.parent);
        w.u32(n.first_child);
        w.u32(n.num_children);
        w.u8(n.is_leaf as u8);
        w.f32(if n.is_leaf { n.idf } else { 0.0 });
        w.f32s(vocab.node_centroid(i as u32));
    }
    Ok(w.buf)
}

pub fn decode_vocabulary(bytes: &[u8]) -> Result<Vocabulary> {
    decode_from(bytes, bytes.len() as u64)
}

/// Streams a vocabulary of `total` bytes from `src`, so only the decoded
/// arrays are ever held in memory.
fn decode_from(mut src: impl Read, total: u64) -> Result<Vocabulary> {
    let short = |what: &str| Error::CorruptPayload(format!("truncated while reading {what}"));
    let mut header = [0u8; HEADER_BYTES];
    let head_len = total.min(HEADER_BYTES as u64) as usize;
    src.read_exact(&mut header[..head_len]).map_err(|_| short("header"))?;
    let mut r = ByteReader::new(&header[..head_len]);
    r.magic(&VOCAB_MAGIC)?;
    r.version(VOCAB_VERSION)?;
    let dim = r.u32("dimension")? as usize;
    let branching = r.u32("branching")?;
    let num_nodes = r.u32("node count")? as usize;
    let num_words = r.u32("word count")? as usize;
    let expected = num_nodes as u128 * node_bytes(dim) as u128;
    let present = total - HEADER_BYTES as u64;
    if present as u128 != expected {
        return Err(Error::CorruptPayload(format!(
            "{num_nodes} nodes of dimension {dim} need {expected} bytes, {present} present"
        )));
    }
    let mut nodes = Vec::with_capacity(num_nodes);
    let mut centroids = Vec::with_capacity(num_nodes * dim);
    let mut record = vec![0u8; node_bytes(dim)];
    for _ in 0..num_nodes {
        src.read_exact(&mut record).map_err(|_| short("node"))?;
        let mut r = ByteReader::new(&record);
        let parent = r.u32("node")?;
        let first_child = r.u32("node")?;
        let num_children = r.u32("node")?;
        let is_leaf = match r.u8("node")? {
            0 => false,
            1 => true,
            other => return Err(Error::CorruptPayload(format!("leaf flag {other}"))),
        };
        let idf = r.f32("node")?;
        r.f32_into(dim, &mut centroids, "centroid")?;
        nodes.push(VocabNode {
            parent,
            first_child,
            num_children,
            is_leaf,
            idf,
        });
    }
    let vocab = Vocabulary::from_parts(dim, branching, nodes, centroids)?;
    if vocab.num_words() != num_words {
        return Err(Error::CorruptPayload(format!(
            "header declares {num_words} words, tree has {}",
            vocab.num_words()
        )));
    }
    Ok(vocab)
}

pub fn save_vocab(vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_vocabulary(vocab)?)
}

pub fn load_vocab(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let total = file.metadata().map_err(|e| Error::io(path, e))?.len();
    decode_from(BufReader::with_capacity(1 << 20, file), total)
}
