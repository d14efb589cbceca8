//! Little-endian, fixed-width serialization of layers, index metadata, data
//! layers and design files, and materialization of a design on a backend.

use thiserror::Error;

use crate::model::{
    BandNode, IndexDesign, Key, LayerDesign, LayerNodes, ModelError, Node, NodeKind, PositionRange, StepNode,
};
use crate::storage::{Backend, ByteRange, ResourceId, StorageError};

pub const MAGIC: [u8; 4] = *b"AIRX";
pub const DESIGN_MAGIC: [u8; 4] = *b"AIRD";
pub const VERSION: u16 = 1;
pub const DATA_ENTRY_SIZE: u32 = 16;

const TAG_STEP: u8 = 0;
const TAG_BAND: u8 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{len} bytes is not a whole number of {entry}-byte entries")]
    Misaligned { len: usize, entry: u64 },
    #[error("unknown node type tag {0}")]
    UnknownNodeType(u8),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated input while reading {0}")]
    Truncated(&'static str),
    #[error("data keys decrease at entry {0}")]
    UnsortedData(usize),
    #[error("malformed index: {0}")]
    Malformed(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, FormatError>;

/// Bounds-checked little-endian reader.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(FormatError::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(read_u64(self.take(8, what)?, 0))
    }

    fn resource(&mut self, what: &'static str) -> Result<ResourceId> {
        let len = self.u16(what)? as usize;
        let raw = self.take(len, what)?;
        let text = std::str::from_utf8(raw).map_err(|_| FormatError::Malformed(format!("{what} is not UTF-8")))?;
        Ok(text.parse()?)
    }
}

#[inline]
fn read_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn put_resource(out: &mut Vec<u8>, id: &ResourceId) -> Result<()> {
    let text = id.to_string();
    let len = u16::try_from(text.len()).map_err(|_| FormatError::Malformed(format!("resource id too long: {text}")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    Ok(())
}

/// Entries back to back: lower key, then the node payload.
pub fn encode_layer(layer: &LayerDesign) -> Vec<u8> {
    let mut out = Vec::with_capacity(layer.serialized_size() as usize);
    match layer.nodes() {
        LayerNodes::Step {
            pieces,
            keys,
            positions,
        } => {
            for (j, &lower) in layer.lower_keys().iter().enumerate() {
                out.extend_from_slice(&lower.to_le_bytes());
                for i in j * pieces..(j + 1) * pieces {
                    out.extend_from_slice(&keys[i].to_le_bytes());
                    out.extend_from_slice(&positions[i].to_le_bytes());
                }
            }
        }
        LayerNodes::Band(bands) => {
            for (&lower, b) in layer.lower_keys().iter().zip(bands) {
                out.extend_from_slice(&lower.to_le_bytes());
                out.extend_from_slice(&b.x1.to_le_bytes());
                out.extend_from_slice(&b.x2.to_le_bytes());
                out.extend_from_slice(&b.y1.to_bits().to_le_bytes());
                out.extend_from_slice(&b.y2.to_bits().to_le_bytes());
                out.extend_from_slice(&b.delta.to_le_bytes());
            }
        }
    }
    out
}

/// Lower key of the `i`-th entry.
#[inline]
pub fn entry_lower_key(bytes: &[u8], entry_size: u64, i: usize) -> Key {
    read_u64(bytes, i * entry_size as usize)
}

/// First partition position of a step entry.
#[inline]
pub fn step_first_position(entry: &[u8]) -> u64 {
    read_u64(entry, 16)
}

/// Decodes one entry of `kind`; `entry` must be exactly one entry long.
pub fn decode_entry(entry: &[u8], kind: NodeKind) -> Result<(Key, Node)> {
    if entry.len() as u64 != kind.entry_size() {
        return Err(FormatError::Misaligned {
            len: entry.len(),
            entry: kind.entry_size(),
        });
    }
    let lower = read_u64(entry, 0);
    let node = match kind {
        NodeKind::Step { pieces } => {
            let (mut keys, mut positions) = (Vec::with_capacity(pieces), Vec::with_capacity(pieces));
            for i in 0..pieces {
                keys.push(read_u64(entry, 8 + 16 * i));
                positions.push(read_u64(entry, 16 + 16 * i));
            }
            Node::Step(StepNode { keys, positions })
        }
        NodeKind::Band => Node::Band(BandNode {
            x1: read_u64(entry, 8),
            x2: read_u64(entry, 16),
            y1: f64::from_bits(read_u64(entry, 24)),
            y2: f64::from_bits(read_u64(entry, 32)),
            delta: read_u64(entry, 40),
        }),
    };
    Ok((lower, node))
}

/// Decodes an entry-aligned byte range.
pub fn decode_nodes(bytes: &[u8], kind: NodeKind) -> Result<Vec<(Key, Node)>> {
    let es = kind.entry_size();
    if !(bytes.len() as u64).is_multiple_of(es) {
        return Err(FormatError::Misaligned {
            len: bytes.len(),
            entry: es,
        });
    }
    bytes.chunks_exact(es as usize).map(|e| decode_entry(e, kind)).collect()
}

/// Node kind from its on-disk tag and step piece count.
pub fn node_kind(tag: u8, pieces: u16) -> Result<NodeKind> {
    match tag {
        TAG_STEP if pieces > 0 => Ok(NodeKind::Step { pieces: pieces as usize }),
        TAG_STEP => Err(FormatError::Malformed("step layer with p = 0".into())),
        TAG_BAND => Ok(NodeKind::Band),
        t => Err(FormatError::UnknownNodeType(t)),
    }
}

fn kind_tag(kind: NodeKind) -> Result<(u8, u16)> {
    match kind {
        NodeKind::Step { pieces } => u16::try_from(pieces)
            .map(|p| (TAG_STEP, p))
            .map_err(|_| FormatError::Malformed(format!("p = {pieces} does not fit the format"))),
        NodeKind::Band => Ok((TAG_BAND, 0)),
    }
}

pub fn decode_layer(bytes: &[u8], kind: NodeKind, below: PositionRange) -> Result<LayerDesign> {
    let entries = decode_nodes(bytes, kind)?;
    if !entries.is_empty() {
        return Ok(LayerDesign::from_nodes(entries, below)?);
    }
    let nodes = match kind {
        NodeKind::Step { pieces } => LayerNodes::Step {
            pieces,
            keys: Vec::new(),
            positions: Vec::new(),
        },
        NodeKind::Band => LayerNodes::Band(Vec::new()),
    };
    Ok(LayerDesign::new(Vec::new(), nodes, below)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRecord {
    pub kind: NodeKind,
    pub node_count: u64,
    pub resource: ResourceId,
    pub serialized_size: u64,
}

/// Index header; `layers[0]` describes layer 1, the last record the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMetadata {
    pub version: u16,
    pub layers: Vec<LayerRecord>,
    pub data_resource: ResourceId,
    pub data_entry_size: u32,
}

impl IndexMetadata {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        let count = u16::try_from(self.layers.len()).map_err(|_| FormatError::Malformed("too many layers".into()))?;
        out.extend_from_slice(&count.to_le_bytes());
        for rec in &self.layers {
            let (tag, pieces) = kind_tag(rec.kind)?;
            out.push(tag);
            if tag == TAG_STEP {
                out.extend_from_slice(&pieces.to_le_bytes());
            }
            out.extend_from_slice(&rec.node_count.to_le_bytes());
            put_resource(&mut out, &rec.resource)?;
            out.extend_from_slice(&rec.serialized_size.to_le_bytes());
        }
        put_resource(&mut out, &self.data_resource)?;
        out.extend_from_slice(&self.data_entry_size.to_le_bytes());
        Ok(out)
    }

    /// Parses a header from the front of `bytes`; returns it with its length.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut c = Cursor::new(bytes);
        if c.take(4, "magic")? != MAGIC {
            return Err(FormatError::BadMagic);
        }
        let version = c.u16("version")?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let count = c.u16("layer count")?;
        let mut layers = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let tag = c.u8("node type")?;
            let pieces = if tag == TAG_STEP { c.u16("piece count")? } else { 0 };
            let kind = node_kind(tag, pieces)?;
            let node_count = c.u64("node count")?;
            let resource = c.resource("layer resource")?;
            let serialized_size = c.u64("layer size")?;
            if node_count.checked_mul(kind.entry_size()) != Some(serialized_size) {
                return Err(FormatError::Malformed(format!(
                    "{node_count} {kind} nodes cannot occupy {serialized_size} bytes"
                )));
            }
            layers.push(LayerRecord {
                kind,
                node_count,
                resource,
                serialized_size,
            });
        }
        let data_resource = c.resource("data resource")?;
        let data_entry_size = c.u32("data entry size")?;
        let meta = IndexMetadata {
            version,
            layers,
            data_resource,
            data_entry_size,
        };
        Ok((meta, c.pos))
    }
}

/// Writes `(key, value)` entries; keys may repeat but never decrease.
pub fn encode_data_layer(pairs: &[(Key, u64)]) -> Result<Vec<u8>> {
    if let Some(i) = pairs.windows(2).position(|w| w[1].0 < w[0].0) {
        return Err(FormatError::UnsortedData(i + 1));
    }
    let mut out = Vec::with_capacity(pairs.len() * DATA_ENTRY_SIZE as usize);
    for &(k, v) in pairs {
        out.extend_from_slice(&k.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Data layer whose value for each entry is its rank.
pub fn encode_rank_data(keys: &[Key]) -> Result<Vec<u8>> {
    let pairs: Vec<(Key, u64)> = keys.iter().enumerate().map(|(i, &k)| (k, i as u64)).collect();
    encode_data_layer(&pairs)
}

pub fn root_resource(prefix: &ResourceId) -> ResourceId {
    prefix.with_suffix(".root")
}

pub fn layer_resource(prefix: &ResourceId, level: usize) -> ResourceId {
    prefix.with_suffix(&format!(".layer{level}"))
}

/// An opened index: metadata plus where the root layer lives.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltIndex {
    pub metadata: IndexMetadata,
    pub root_resource: ResourceId,
    /// Root layer offset inside `root_resource`.
    pub root_offset: u64,
    pub root_bytes: Vec<u8>,
    pub data_extent: u64,
}

impl BuiltIndex {
    pub fn num_layers(&self) -> usize {
        self.metadata.layers.len()
    }

    /// Reads the metadata and root from `<prefix>.root`.
    pub fn open(prefix: &ResourceId, backend: &dyn Backend) -> Result<Self> {
        let root_resource = root_resource(prefix);
        let extent = backend.extent(&root_resource)?;
        let bytes = if extent == 0 {
            Vec::new()
        } else {
            backend.read(&root_resource, ByteRange::new(0, extent))?
        };
        let (metadata, used) = IndexMetadata::decode(&bytes)?;
        let root_bytes = bytes[used..].to_vec();
        if let Some(root) = metadata.layers.last() {
            if root.resource != root_resource || root.serialized_size != root_bytes.len() as u64 {
                return Err(FormatError::Malformed("root layer is not stored after the metadata".into()));
            }
        } else if !root_bytes.is_empty() {
            return Err(FormatError::Malformed("trailing bytes after metadata".into()));
        }
        if metadata.data_entry_size != DATA_ENTRY_SIZE {
            return Err(FormatError::Malformed(format!(
                "data entry size {} unsupported",
                metadata.data_entry_size
            )));
        }
        let data_extent = backend.extent(&metadata.data_resource)?;
        Ok(BuiltIndex {
            metadata,
            root_resource,
            root_offset: used as u64,
            root_bytes,
            data_extent,
        })
    }

    /// Resource and in-object offset of layer `level` (1-based); level 0 is
    /// the data layer.
    pub fn location(&self, level: usize) -> (ResourceId, u64) {
        let l = self.num_layers();
        if level == 0 {
            (self.metadata.data_resource.clone(), 0)
        } else if level == l {
            (self.root_resource.clone(), self.root_offset)
        } else {
            (self.metadata.layers[level - 1].resource.clone(), 0)
        }
    }

    /// Byte extent of layer `level`; level 0 is the data layer.
    pub fn layer_extent(&self, level: usize) -> u64 {
        if level == 0 {
            self.data_extent
        } else {
            self.metadata.layers[level - 1].serialized_size
        }
    }
}

/// Writes layers `1..L−1` to `<prefix>.layer<l>` and the metadata followed
/// by the root to `<prefix>.root`.
pub fn build_index(
    design: &IndexDesign,
    data_resource: &ResourceId,
    out_prefix: &ResourceId,
    backend: &dyn Backend,
) -> Result<BuiltIndex> {
    let l = design.num_layers();
    let root = root_resource(out_prefix);
    let mut records = Vec::with_capacity(l);
    for (i, layer) in design.layers.iter().enumerate() {
        let level = i + 1;
        let resource = if level == l {
            root.clone()
        } else {
            layer_resource(out_prefix, level)
        };
        if level < l {
            backend.write(&resource, &encode_layer(layer))?;
        }
        records.push(LayerRecord {
            kind: layer.kind(),
            node_count: layer.node_count() as u64,
            resource,
            serialized_size: layer.serialized_size(),
        });
    }
    let metadata = IndexMetadata {
        version: VERSION,
        layers: records,
        data_resource: data_resource.clone(),
        data_entry_size: DATA_ENTRY_SIZE,
    };
    let mut object = metadata.encode()?;
    let root_offset = object.len() as u64;
    let root_bytes = design.root().map(encode_layer).unwrap_or_default();
    object.extend_from_slice(&root_bytes);
    backend.write(&root, &object)?;
    Ok(BuiltIndex {
        metadata,
        root_resource: root,
        root_offset,
        root_bytes,
        data_extent: backend.extent(data_resource)?,
    })
}

/// Self-contained design file: header, then per layer its kind, node count,
/// the extent it points into, and its encoded bytes.
pub fn encode_design(design: &IndexDesign) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&DESIGN_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u16::try_from(design.num_layers()).map_err(|_| FormatError::Malformed("too many layers".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for layer in &design.layers {
        let (tag, pieces) = kind_tag(layer.kind())?;
        let bytes = encode_layer(layer);
        out.push(tag);
        out.extend_from_slice(&pieces.to_le_bytes());
        out.extend_from_slice(&(layer.node_count() as u64).to_le_bytes());
        out.extend_from_slice(&layer.below().lo.to_le_bytes());
        out.extend_from_slice(&layer.below().hi.to_le_bytes());
        out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    Ok(out)
}

pub fn decode_design(bytes: &[u8]) -> Result<IndexDesign> {
    let mut c = Cursor::new(bytes);
    if c.take(4, "magic")? != DESIGN_MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = c.u16("version")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let count = c.u16("layer count")?;
    let mut layers = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let tag = c.u8("node type")?;
        let kind = node_kind(tag, c.u16("piece count")?)?;
        let node_count = c.u64("node count")?;
        let below = PositionRange::new(c.u64("below lo")?, c.u64("below hi")?);
        let len = c.u64("layer length")?;
        let raw = c.take(usize::try_from(len).map_err(|_| FormatError::Truncated("layer bytes"))?, "layer bytes")?;
        let layer = decode_layer(raw, kind, below)?;
        if layer.node_count() as u64 != node_count {
            return Err(FormatError::Malformed("layer node count mismatch".into()));
        }
        layers.push(layer);
    }
    if c.pos != bytes.len() {
        return Err(FormatError::Malformed("trailing bytes after design".into()));
    }
    Ok(IndexDesign::new(layers))
}
