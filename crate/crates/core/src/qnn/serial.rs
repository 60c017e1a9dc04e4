//! The `.qnn` container: a JSON structure header plus a bit-packed
//! weight section, framed by a magic string and a CRC.
//!
//! Layout: `b"QNN1"`, a little-endian u32 header length, the header
//! JSON, a u32 packed-section length, the packed section, and a
//! trailing u32 CRC-32 over everything between the magic and the CRC.
//!
//! Weights are stored as indices into the alphabet, packed at
//! `ceil(log2(levels))` bits per edge, so one-bit networks really do
//! cost one bit per parameter on disk. A header may instead carry
//! `edges_inline` with explicit weights (readable, roughly 20x
//! larger); exactly one of the two edge forms must be present.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, NetBuilder, QuantNet, Src};
use crate::error::{Error, Result};
use crate::sigma_delta::Alphabet;

const MAGIC: &[u8; 4] = b"QNN1";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    alphabet: Vec<f64>,
    input_arity: u32,
    nodes: Vec<HeaderNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges_inline: Option<Vec<(i64, u32, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges_packed: Option<Vec<(i64, u32)>>,
    outputs: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct HeaderNode {
    id: u32,
    layer: u32,
    act: Activation,
    #[serde(default, skip_serializing_if = "bias_is_zero")]
    bias: f64,
}

fn bias_is_zero(b: &f64) -> bool {
    *b == 0.0
}

/// Inputs are encoded as negative source codes so node ids keep their
/// natural values: input `i` becomes `-1 - i`.
fn encode_src(src: Src) -> i64 {
    match src {
        Src::Input(i) => -1 - i as i64,
        Src::Node(id) => id as i64,
    }
}

fn decode_src(code: i64) -> Src {
    if code < 0 {
        Src::Input((-1 - code) as u32)
    } else {
        Src::Node(code as u32)
    }
}

fn bits_per_code(levels: usize) -> u32 {
    usize::BITS - (levels - 1).leading_zeros().min(usize::BITS - 1)
}

fn pack_codes(codes: &[usize], bpc: u32) -> Vec<u8> {
    let total_bits = codes.len() * bpc as usize;
    let mut out = vec![0u8; total_bits.div_ceil(8)];
    for (i, &code) in codes.iter().enumerate() {
        for b in 0..bpc as usize {
            if code >> b & 1 == 1 {
                let pos = i * bpc as usize + b;
                out[pos / 8] |= 1 << (pos % 8);
            }
        }
    }
    out
}

fn unpack_codes(bytes: &[u8], n: usize, bpc: u32) -> Result<Vec<usize>> {
    let need = (n * bpc as usize).div_ceil(8);
    if bytes.len() < need {
        return Err(Error::format(format!(
            "packed weight section too short: {} bytes for {} codes",
            bytes.len(),
            n
        )));
    }
    let mut codes = Vec::with_capacity(n);
    for i in 0..n {
        let mut code = 0usize;
        for b in 0..bpc as usize {
            let pos = i * bpc as usize + b;
            if bytes[pos / 8] >> (pos % 8) & 1 == 1 {
                code |= 1 << b;
            }
        }
        codes.push(code);
    }
    Ok(codes)
}

/// Serializes a network with bit-packed weights.
pub fn encode_qnn(net: &QuantNet) -> Result<Vec<u8>> {
    let alphabet = net.alphabet().levels().to_vec();
    let bpc = bits_per_code(alphabet.len());

    let mut edge_list = Vec::new();
    let mut codes = Vec::new();
    for edge in net.edges() {
        let code = net.alphabet().index_of(edge.weight).ok_or_else(|| {
            Error::format(format!("weight {} is not an alphabet level", edge.weight))
        })?;
        edge_list.push((encode_src(edge.from), edge.to));
        codes.push(code);
    }

    let header = Header {
        version: VERSION,
        alphabet,
        input_arity: net.input_arity(),
        nodes: net
            .nodes()
            .iter()
            .map(|n| HeaderNode {
                id: n.id,
                layer: n.layer,
                act: n.activation,
                bias: n.bias,
            })
            .collect(),
        edges_inline: None,
        edges_packed: Some(edge_list),
        outputs: net.outputs().to_vec(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::format(format!("header serialization failed: {e}")))?;

    let mut packed = Vec::new();
    packed.extend_from_slice(&(codes.len() as u32).to_le_bytes());
    packed.push(bpc as u8);
    packed.extend_from_slice(&pack_codes(&codes, bpc));

    let mut body = Vec::new();
    body.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    body.extend_from_slice(&header_json);
    body.extend_from_slice(&(packed.len() as u32).to_le_bytes());
    body.extend_from_slice(&packed);

    let crc = crc32fast::hash(&body);
    let mut out = Vec::with_capacity(4 + body.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&body);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Parses and fully revalidates a serialized network. The graph is
/// rebuilt through [`NetBuilder`], so structural and alphabet
/// violations are rejected the same way they would be at construction
/// time.
pub fn decode_qnn(bytes: &[u8]) -> Result<QuantNet> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::format("not a QNN1 file"));
    }
    let body = &bytes[4..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let crc = crc32fast::hash(body);
    if crc != stored_crc {
        return Err(Error::format(format!(
            "checksum mismatch: stored {stored_crc:#010x}, computed {crc:#010x}"
        )));
    }

    let mut rd = body;
    let header_len = read_u32(&mut rd)? as usize;
    if rd.len() < header_len {
        return Err(Error::format("truncated header"));
    }
    let (header_bytes, rest) = rd.split_at(header_len);
    rd = rest;
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::format(format!("malformed header: {e}")))?;
    if header.version != VERSION {
        return Err(Error::format(format!(
            "unsupported version {}",
            header.version
        )));
    }
    let packed_len = read_u32(&mut rd)? as usize;
    if rd.len() < packed_len {
        return Err(Error::format("truncated packed section"));
    }
    let packed = &rd[..packed_len];

    let alphabet = Alphabet::new(header.alphabet.clone())?;

    // Resolve the edge list to explicit weights.
    let edges: Vec<(i64, u32, f64)> = match (&header.edges_inline, &header.edges_packed) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(Error::format(
                "header must carry exactly one of edges_inline or edges_packed",
            ));
        }
        (Some(inline), None) => inline.clone(),
        (None, Some(packed_edges)) => {
            let mut prd = packed;
            let n = read_u32(&mut prd)? as usize;
            if n != packed_edges.len() {
                return Err(Error::format(format!(
                    "packed section lists {} weights for {} edges",
                    n,
                    packed_edges.len()
                )));
            }
            if prd.is_empty() {
                return Err(Error::format("packed section missing code width"));
            }
            let bpc = prd[0] as u32;
            if bpc != bits_per_code(alphabet.levels().len()) {
                return Err(Error::format(format!(
                    "packed code width {bpc} does not match alphabet size {}",
                    alphabet.levels().len()
                )));
            }
            let codes = unpack_codes(&prd[1..], n, bpc)?;
            packed_edges
                .iter()
                .zip(codes)
                .map(|(&(src, to), code)| {
                    let w = *alphabet.levels().get(code).ok_or_else(|| {
                        Error::format(format!("weight code {code} out of range"))
                    })?;
                    Ok((src, to, w))
                })
                .collect::<Result<_>>()?
        }
    };

    // Regroup edges per destination and rebuild in id order.
    let n_nodes = header.nodes.len();
    let mut incoming: Vec<Vec<(Src, f64)>> = vec![Vec::new(); n_nodes];
    for &(src, to, w) in &edges {
        let slot = incoming
            .get_mut(to as usize)
            .ok_or_else(|| Error::format(format!("edge into unknown node {to}")))?;
        slot.push((decode_src(src), w));
    }

    let mut builder = NetBuilder::new(alphabet, header.input_arity);
    for (i, hn) in header.nodes.iter().enumerate() {
        if hn.id as usize != i {
            return Err(Error::format(format!(
                "node ids must be dense and ascending, found {} at position {i}",
                hn.id
            )));
        }
        builder.add_node_at(hn.layer, hn.act, hn.bias, &incoming[i])?;
    }
    for &out in &header.outputs {
        builder.mark_output(out)?;
    }
    builder.finish()
}

fn read_u32(rd: &mut &[u8]) -> Result<u32> {
    if rd.len() < 4 {
        return Err(Error::format("unexpected end of file"));
    }
    let (head, rest) = rd.split_at(4);
    *rd = rest;
    Ok(u32::from_le_bytes(head.try_into().unwrap()))
}

pub fn write_qnn(net: &QuantNet, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_qnn(net)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_qnn(path: impl AsRef<Path>) -> Result<QuantNet> {
    let bytes = fs::read(path)?;
    decode_qnn(&bytes)
}
