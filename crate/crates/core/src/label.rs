//! Data labels and their byte codec.
//!
//! A port label is the root path of the parse-tree node where the port was
//! first created plus its 1-based index. A data label pairs the labels of
//! the producing and consuming ports with their common path prefix stored
//! once.
//!
//! Wire format, all integers unsigned LEB128:
//!
//! ```text
//! header   = prefix_len << 2 | has_src << 1 | has_dst
//! label    = k << 1, i            (composite)
//!          | s << 1 | 1, t, i     (recursive)
//! side     = suffix_len, label*, index
//! encoding = header, label* (prefix), [side (src)], [side (dst)]
//! ```

use std::fmt;
use std::ops::Range;

use integer_encoding::VarInt;
use serde::{Deserialize, Serialize};

use crate::error::CodecError;
use crate::run::{ItemId, RunState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeLabel {
    Composite { k: usize, i: usize },
    Recursive { s: usize, t: usize, i: usize },
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            EdgeLabel::Composite { k, i } => write!(f, "({k},{i})"),
            EdgeLabel::Recursive { s, t, i } => write!(f, "({s},{t},{i})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PortLabel {
    pub path: Vec<EdgeLabel>,
    /// 1-based port index at the anchor module.
    pub index: usize,
}

/// One side of a data label below the shared prefix.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Side {
    pub suffix: Vec<EdgeLabel>,
    /// 1-based port index.
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DataLabel {
    pub prefix: Vec<EdgeLabel>,
    /// Producing (output) port; absent for inputs of the start module.
    pub src: Option<Side>,
    /// Consuming (input) port; absent for outputs of the start module.
    pub dst: Option<Side>,
}

/// A root path split into a shared prefix and a private suffix.
#[derive(Clone, Copy, Debug)]
pub struct PathRef<'a> {
    pub prefix: &'a [EdgeLabel],
    pub suffix: &'a [EdgeLabel],
}

impl<'a> PathRef<'a> {
    pub fn len(&self) -> usize {
        self.prefix.len() + self.suffix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// 0-based element access.
    pub fn get(&self, a: usize) -> EdgeLabel {
        if a < self.prefix.len() {
            self.prefix[a]
        } else {
            self.suffix[a - self.prefix.len()]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = EdgeLabel> + 'a {
        self.prefix.iter().chain(self.suffix.iter()).copied()
    }

    pub fn to_vec(&self) -> Vec<EdgeLabel> {
        self.iter().collect()
    }
}

impl DataLabel {
    pub fn new(src: Option<PortLabel>, dst: Option<PortLabel>) -> DataLabel {
        match (src, dst) {
            (Some(o), Some(i)) => {
                let n = o.path.iter().zip(&i.path).take_while(|(a, b)| a == b).count();
                DataLabel {
                    prefix: o.path[..n].to_vec(),
                    src: Some(Side {
                        suffix: o.path[n..].to_vec(),
                        index: o.index,
                    }),
                    dst: Some(Side {
                        suffix: i.path[n..].to_vec(),
                        index: i.index,
                    }),
                }
            }
            (o, i) => DataLabel {
                prefix: Vec::new(),
                src: o.map(|p| Side {
                    suffix: p.path,
                    index: p.index,
                }),
                dst: i.map(|p| Side {
                    suffix: p.path,
                    index: p.index,
                }),
            },
        }
    }

    fn side_path<'a>(&'a self, side: &'a Side) -> PathRef<'a> {
        PathRef {
            prefix: &self.prefix,
            suffix: &side.suffix,
        }
    }

    pub fn src_path(&self) -> Option<(PathRef<'_>, usize)> {
        self.src.as_ref().map(|s| (self.side_path(s), s.index))
    }

    pub fn dst_path(&self) -> Option<(PathRef<'_>, usize)> {
        self.dst.as_ref().map(|s| (self.side_path(s), s.index))
    }

    pub fn src_label(&self) -> Option<PortLabel> {
        self.src_path().map(|(p, x)| PortLabel { path: p.to_vec(), index: x })
    }

    pub fn dst_label(&self) -> Option<PortLabel> {
        self.dst_path().map(|(p, x)| PortLabel { path: p.to_vec(), index: x })
    }

    /// All edge labels on either path.
    pub fn edge_labels(&self) -> impl Iterator<Item = EdgeLabel> + '_ {
        self.prefix
            .iter()
            .chain(self.src.iter().flat_map(|s| s.suffix.iter()))
            .chain(self.dst.iter().flat_map(|s| s.suffix.iter()))
            .copied()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16);
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        let header = (self.prefix.len() as u64) << 2 | (self.src.is_some() as u64) << 1 | self.dst.is_some() as u64;
        push_varint(out, header);
        for e in &self.prefix {
            encode_edge(out, *e);
        }
        for side in [&self.src, &self.dst].into_iter().flatten() {
            push_varint(out, side.suffix.len() as u64);
            for e in &side.suffix {
                encode_edge(out, *e);
            }
            push_varint(out, side.index as u64);
        }
    }

    /// Size of the encoding in bits (bytes × 8).
    pub fn bit_length(&self) -> usize {
        self.encode().len() * 8
    }

    pub fn decode(bytes: &[u8]) -> Result<DataLabel, CodecError> {
        let mut r = Reader { bytes, pos: 0 };
        let label = r.data_label()?;
        if r.pos != bytes.len() {
            return Err(CodecError::Trailing(bytes.len() - r.pos));
        }
        Ok(label)
    }
}

impl fmt::Display for DataLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |f: &mut fmt::Formatter<'_>, side: &Option<Side>| -> fmt::Result {
            match side {
                None => write!(f, "-"),
                Some(s) => {
                    write!(f, "{{")?;
                    for e in self.prefix.iter().chain(&s.suffix) {
                        write!(f, "{e},")?;
                    }
                    write!(f, "{}}}", s.index)
                }
            }
        };
        show(f, &self.src)?;
        write!(f, " -> ")?;
        show(f, &self.dst)
    }
}

fn push_varint(out: &mut Vec<u8>, v: u64) {
    let mut buf = [0u8; 10];
    let n = v.encode_var(&mut buf);
    out.extend_from_slice(&buf[..n]);
}

fn encode_edge(out: &mut Vec<u8>, e: EdgeLabel) {
    match e {
        EdgeLabel::Composite { k, i } => {
            push_varint(out, (k as u64) << 1);
            push_varint(out, i as u64);
        }
        EdgeLabel::Recursive { s, t, i } => {
            push_varint(out, (s as u64) << 1 | 1);
            push_varint(out, t as u64);
            push_varint(out, i as u64);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn varint(&mut self) -> Result<u64, CodecError> {
        let rest = &self.bytes[self.pos..];
        // A u64 needs at most 10 bytes; a longer run of continuation bits overflows.
        let end = rest.iter().position(|b| b & 0x80 == 0).ok_or(CodecError::Truncated)?;
        if end >= 10 {
            return Err(CodecError::Overflow);
        }
        let (v, n) = u64::decode_var(rest).ok_or(CodecError::Overflow)?;
        self.pos += n;
        Ok(v)
    }

    fn usize(&mut self) -> Result<usize, CodecError> {
        usize::try_from(self.varint()?).map_err(|_| CodecError::Overflow)
    }

    fn edge(&mut self) -> Result<EdgeLabel, CodecError> {
        let head = self.varint()?;
        let first = usize::try_from(head >> 1).map_err(|_| CodecError::Overflow)?;
        if head & 1 == 0 {
            Ok(EdgeLabel::Composite { k: first, i: self.usize()? })
        } else {
            Ok(EdgeLabel::Recursive {
                s: first,
                t: self.usize()?,
                i: self.usize()?,
            })
        }
    }

    fn edges(&mut self, n: usize) -> Result<Vec<EdgeLabel>, CodecError> {
        // Each label takes at least two bytes; reject absurd lengths early.
        if n > (self.bytes.len() - self.pos) / 2 {
            return Err(CodecError::Truncated);
        }
        (0..n).map(|_| self.edge()).collect()
    }

    fn side(&mut self) -> Result<Side, CodecError> {
        let n = self.usize()?;
        let suffix = self.edges(n)?;
        let index = self.usize()?;
        if index == 0 {
            return Err(CodecError::Invalid("port index 0"));
        }
        Ok(Side { suffix, index })
    }

    fn data_label(&mut self) -> Result<DataLabel, CodecError> {
        let header = self.varint()?;
        let has_dst = header & 1 == 1;
        let has_src = header & 2 == 2;
        if !has_src && !has_dst {
            return Err(CodecError::Invalid("label without ports"));
        }
        let plen = usize::try_from(header >> 2).map_err(|_| CodecError::Overflow)?;
        let prefix = self.edges(plen)?;
        let src = if has_src { Some(self.side()?) } else { None };
        let dst = if has_dst { Some(self.side()?) } else { None };
        Ok(DataLabel { prefix, src, dst })
    }
}

/// Label of one item of a run, derived from the anchors fixed at creation.
pub fn label_item(rs: &RunState, item: ItemId) -> DataLabel {
    let it = &rs.items[item];
    let port = |a: Option<(usize, usize)>| {
        a.map(|(node, p)| PortLabel {
            path: rs.path(node),
            index: p + 1,
        })
    };
    DataLabel::new(port(it.src_anchor), port(it.dst_anchor))
}

/// Labels for the items created by one step (or by the start of the run).
pub fn label_new_items(rs: &RunState, items: Range<ItemId>) -> Vec<DataLabel> {
    items.map(|i| label_item(rs, i)).collect()
}

/// Encoded labels of a run, indexed by item id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelStore {
    pub labels: Vec<Vec<u8>>,
}

impl LabelStore {
    pub fn push(&mut self, label: &DataLabel) {
        self.labels.push(label.encode());
    }

    pub fn get(&self, item: ItemId) -> Option<Result<DataLabel, CodecError>> {
        self.labels.get(item).map(|b| DataLabel::decode(b))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Records of `varint(item id), varint(length), bytes`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (id, l) in self.labels.iter().enumerate() {
            push_varint(&mut out, id as u64);
            push_varint(&mut out, l.len() as u64);
            out.extend_from_slice(l);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<LabelStore, CodecError> {
        let mut r = Reader { bytes, pos: 0 };
        let mut labels = Vec::new();
        while r.pos < bytes.len() {
            let id = r.usize()?;
            if id != labels.len() {
                return Err(CodecError::Invalid("item ids out of order"));
            }
            let n = r.usize()?;
            let end = r.pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or(CodecError::Truncated)?;
            let body = &bytes[r.pos..end];
            DataLabel::decode(body)?;
            labels.push(body.to_vec());
            r.pos = end;
        }
        Ok(LabelStore { labels })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_edge() -> impl Strategy<Value = EdgeLabel> {
        prop_oneof![
            (1usize..300, 1usize..50).prop_map(|(k, i)| EdgeLabel::Composite { k, i }),
            (1usize..20, 1usize..10, 1usize..100_000).prop_map(|(s, t, i)| EdgeLabel::Recursive { s, t, i }),
        ]
    }

    fn arb_port() -> impl Strategy<Value = PortLabel> {
        (proptest::collection::vec(arb_edge(), 0..8), 1usize..65).prop_map(|(path, index)| PortLabel { path, index })
    }

    #[test]
    fn start_input_label_is_three_bytes() {
        let l = DataLabel::new(None, Some(PortLabel { path: vec![], index: 1 }));
        assert_eq!(l.encode().len(), 3);
        assert_eq!(DataLabel::decode(&l.encode()).unwrap(), l);
    }

    #[test]
    fn prefix_is_factored() {
        let shared = vec![EdgeLabel::Composite { k: 1, i: 3 }, EdgeLabel::Recursive { s: 1, t: 1, i: 5 }];
        let mut a = shared.clone();
        a.push(EdgeLabel::Composite { k: 5, i: 1 });
        let mut b = shared.clone();
        b.push(EdgeLabel::Composite { k: 5, i: 2 });
        let l = DataLabel::new(Some(PortLabel { path: a.clone(), index: 1 }), Some(PortLabel { path: b, index: 2 }));
        assert_eq!(l.prefix, shared);
        assert_eq!(l.src_label().unwrap().path, a);
    }

    #[test]
    fn malformed_bytes_are_rejected() {
        assert_eq!(DataLabel::decode(&[]), Err(CodecError::Truncated));
        assert_eq!(DataLabel::decode(&[0x80]), Err(CodecError::Truncated));
        assert!(DataLabel::decode(&[0]).is_err());
        assert!(DataLabel::decode(&[1, 0, 1, 7]).is_err());
        assert!(DataLabel::decode(&[0xff; 12]).is_err());
    }

    proptest! {
        #[test]
        fn codec_round_trips(src in proptest::option::of(arb_port()), dst in arb_port(), flip in any::<bool>()) {
            let l = if flip { DataLabel::new(Some(dst), src) } else { DataLabel::new(src, Some(dst)) };
            let bytes = l.encode();
            prop_assert_eq!(DataLabel::decode(&bytes).unwrap(), l);
        }

        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..40)) {
            let _ = DataLabel::decode(&bytes);
            let _ = LabelStore::from_bytes(&bytes);
        }
    }
}
