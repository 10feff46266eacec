//! MSCB v1, the serialized form of a compressed image.
//!
//! ```text
//! magic "MSCB" | version u8 = 1 | level u8 | flags u8 | width u16 | height u16
//! sem_len u16 | semantic bytes (raw or DEFLATE, flags bit 0)
//! J_maps u8 | J x (rows u8, cols u8, ceil(rows*cols/8) packed bytes)
//! pixel section: flags bit 1 set   -> payload_len u32, payload bytes
//!                flags bit 1 clear -> ds_w u8, ds_h u8, bits u8, packed indices
//! crc u32 over every preceding byte
//! ```
//!
//! Integers are little-endian; bit payloads are row-major, MSB first, with
//! zero padding. A dropped pixel payload is written as `ds_w = ds_h = bits =
//! 0`.
//!
//! The parser only accepts canonical encodings, so `serialize(parse(b)) == b`
//! for every accepted `b`.

use alloc::vec::Vec;

use thiserror::Error;

use crate::crc::crc32;
use crate::map::{BinaryMap, MapError};
use crate::pixel::{packed_len, PixelError, PixelPayload, QuantizedPixels};
use crate::semantic::{pack_text, unpack_text, SemanticError, SemanticPayload, MAX_ITEMS};

pub const MAGIC: [u8; 4] = *b"MSCB";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 11;
pub const CRC_LEN: usize = 4;

pub const FLAG_TEXT_COMPRESSED: u8 = 0b01;
pub const FLAG_PIXEL_NEURAL: u8 = 0b10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Section {
    Header,
    Semantic,
    Maps,
    Pixel,
    Crc,
}

impl Section {
    pub const ALL: [Section; 5] = [Self::Header, Self::Semantic, Self::Maps, Self::Pixel, Self::Crc];

    pub fn name(self) -> &'static str {
        match self {
            Self::Header => "header",
            Self::Semantic => "semantic",
            Self::Maps => "maps",
            Self::Pixel => "pixel",
            Self::Crc => "crc",
        }
    }
}

impl core::fmt::Display for Section {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContainerError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("invalid level {0}")]
    InvalidLevel(u8),
    #[error("reserved flag bits set: {0:#04x}")]
    ReservedFlags(u8),
    #[error("zero image dimension")]
    ZeroDimension,
    #[error("truncated {section} section")]
    Truncated { section: Section },
    #[error("{0} bytes after the crc")]
    TrailingBytes(usize),
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("{0} items exceed the cap of 3")]
    TooManyItems(usize),
    #[error("semantic section has {semantic} items but maps section has {maps}")]
    ItemCountMismatch { semantic: usize, maps: usize },
    #[error("level 3 containers carry no items")]
    ItemsAtLevelThree,
    #[error("pixel flag does not match payload")]
    PixelFlagMismatch,
    #[error("semantic section longer than 65535 bytes")]
    SemanticTooLong,
    #[error("non-canonical {0} encoding")]
    NonCanonical(Section),
    #[error("semantic: {0}")]
    Semantic(#[from] SemanticError),
    #[error("map: {0}")]
    Map(#[from] MapError),
    #[error("pixel: {0}")]
    Pixel(#[from] PixelError),
}

/// Everything a decoder needs to reconstruct one image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MiscContainer {
    pub version: u8,
    pub level: u8,
    pub text_compressed: bool,
    pub width: u16,
    pub height: u16,
    pub semantic: SemanticPayload,
    pub maps: Vec<BinaryMap>,
    pub pixel: PixelPayload,
}

impl MiscContainer {
    pub fn flags(&self) -> u8 {
        let mut f = 0;
        if self.text_compressed {
            f |= FLAG_TEXT_COMPRESSED;
        }
        if self.pixel.is_neural() {
            f |= FLAG_PIXEL_NEURAL;
        }
        f
    }

    pub fn pixel_count(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn validate(&self) -> Result<(), ContainerError> {
        if self.version != VERSION {
            return Err(ContainerError::UnsupportedVersion(self.version));
        }
        if !(1..=3).contains(&self.level) {
            return Err(ContainerError::InvalidLevel(self.level));
        }
        if self.width == 0 || self.height == 0 {
            return Err(ContainerError::ZeroDimension);
        }
        let j = self.semantic.items.len();
        if j > MAX_ITEMS {
            return Err(ContainerError::TooManyItems(j));
        }
        if self.maps.len() != j {
            return Err(ContainerError::ItemCountMismatch { semantic: j, maps: self.maps.len() });
        }
        if self.level == 3 && j != 0 {
            return Err(ContainerError::ItemsAtLevelThree);
        }
        self.semantic.validate(MAX_ITEMS)?;
        if let PixelPayload::Neural(blob) = &self.pixel {
            if blob.is_empty() {
                return Err(PixelError::EmptyNeural.into());
            }
            if blob.len() > u32::MAX as usize {
                return Err(ContainerError::Truncated { section: Section::Pixel });
            }
        }
        Ok(())
    }

    /// MSCB bytes, CRC included.
    pub fn serialize(&self) -> Result<Vec<u8>, ContainerError> {
        self.validate()?;
        let sem = pack_text(&self.semantic, self.text_compressed)?;
        if sem.len() > u16::MAX as usize {
            return Err(ContainerError::SemanticTooLong);
        }
        let mut out = Vec::with_capacity(64 + sem.len());
        out.extend_from_slice(&MAGIC);
        out.push(self.version);
        out.push(self.level);
        out.push(self.flags());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());

        out.extend_from_slice(&(sem.len() as u16).to_le_bytes());
        out.extend_from_slice(&sem);

        out.push(self.maps.len() as u8);
        for map in &self.maps {
            out.push(map.rows());
            out.push(map.cols());
            out.extend_from_slice(&map.pack());
        }

        match &self.pixel {
            PixelPayload::Neural(blob) => {
                out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
                out.extend_from_slice(blob);
            }
            PixelPayload::Quantized(q) => {
                out.extend_from_slice(&[q.width(), q.height(), q.bits()]);
                out.extend_from_slice(&q.pack());
            }
            PixelPayload::Empty => out.extend_from_slice(&[0, 0, 0]),
        }

        let crc = crc32(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, ContainerError> {
        let frame = Frame::read(bytes)?;
        let computed = crc32(&bytes[..frame.crc_offset]);
        if computed != frame.crc {
            return Err(ContainerError::CrcMismatch { stored: frame.crc, computed });
        }

        let semantic = unpack_text(frame.semantic, frame.text_compressed)?;
        if pack_text(&semantic, frame.text_compressed).ok().as_deref() != Some(frame.semantic) {
            return Err(ContainerError::NonCanonical(Section::Semantic));
        }
        let maps = frame
            .maps
            .iter()
            .map(|&(r, c, bits)| BinaryMap::unpack(r, c, bits))
            .collect::<Result<Vec<_>, _>>()?;
        let pixel = match frame.pixel {
            RawPixel::Neural(blob) => {
                if blob.is_empty() {
                    return Err(PixelError::EmptyNeural.into());
                }
                PixelPayload::Neural(blob.to_vec())
            }
            RawPixel::Empty => PixelPayload::Empty,
            RawPixel::Quantized { w, h, bits, data } => {
                PixelPayload::Quantized(QuantizedPixels::unpack(w, h, bits, data)?)
            }
        };
        let container = Self {
            version: frame.version,
            level: frame.level,
            text_compressed: frame.text_compressed,
            width: frame.width,
            height: frame.height,
            semantic,
            maps,
            pixel,
        };
        container.validate()?;
        Ok(container)
    }

    /// CRC the serialized form would carry.
    pub fn crc(&self) -> Result<u32, ContainerError> {
        let bytes = self.serialize()?;
        let tail = &bytes[bytes.len() - CRC_LEN..];
        Ok(u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]))
    }

    pub fn rate_report(&self) -> Result<RateReport, ContainerError> {
        let sem = pack_text(&self.semantic, self.text_compressed)?;
        let map_bits: Vec<u64> = self.maps.iter().map(|m| (2 + m.packed_len() as u64) * 8).collect();
        let pixel_bytes = match &self.pixel {
            PixelPayload::Neural(blob) => 4 + blob.len(),
            PixelPayload::Quantized(q) => 3 + q.packed_len(),
            PixelPayload::Empty => 3,
        };
        let sections = [
            (Section::Header, HEADER_LEN as u64 * 8),
            (Section::Semantic, (2 + sem.len() as u64) * 8),
            (Section::Maps, 8 + map_bits.iter().sum::<u64>()),
            (Section::Pixel, pixel_bytes as u64 * 8),
            (Section::Crc, CRC_LEN as u64 * 8),
        ];
        let total_bits = sections.iter().map(|&(_, b)| b).sum();
        self.validate()?;
        Ok(RateReport { total_bits, section_bits: sections, map_bits, pixels: self.pixel_count() })
    }
}

/// Bit accounting per section, against the original pixel count.
#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub total_bits: u64,
    pub section_bits: [(Section, u64); 5],
    /// Bits of each map entry (its rows/cols bytes plus packed bits).
    pub map_bits: Vec<u64>,
    pub pixels: u64,
}

impl RateReport {
    pub fn bpp(&self) -> f64 {
        self.total_bits as f64 / self.pixels as f64
    }

    pub fn bits(&self, section: Section) -> u64 {
        self.section_bits.iter().find(|(s, _)| *s == section).map(|&(_, b)| b).unwrap_or(0)
    }

    pub fn section_bpp(&self, section: Section) -> f64 {
        self.bits(section) as f64 / self.pixels as f64
    }
}

enum RawPixel<'a> {
    Neural(&'a [u8]),
    Quantized { w: u8, h: u8, bits: u8, data: &'a [u8] },
    Empty,
}

/// Section boundaries located without interpreting payloads.
struct Frame<'a> {
    version: u8,
    level: u8,
    text_compressed: bool,
    width: u16,
    height: u16,
    semantic: &'a [u8],
    maps: Vec<(u8, u8, &'a [u8])>,
    pixel: RawPixel<'a>,
    crc_offset: usize,
    crc: u32,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, section: Section) -> Result<&'a [u8], ContainerError> {
        if self.buf.len() - self.pos < n {
            return Err(ContainerError::Truncated { section });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, section: Section) -> Result<u8, ContainerError> {
        Ok(self.take(1, section)?[0])
    }

    fn u16(&mut self, section: Section) -> Result<u16, ContainerError> {
        let b = self.take(2, section)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, section: Section) -> Result<u32, ContainerError> {
        let b = self.take(4, section)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl<'a> Frame<'a> {
    fn read(buf: &'a [u8]) -> Result<Self, ContainerError> {
        let mut cur = Cursor { buf, pos: 0 };
        let magic = cur.take(4, Section::Header)?;
        if magic != MAGIC {
            return Err(ContainerError::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
        }
        let version = cur.u8(Section::Header)?;
        if version != VERSION {
            return Err(ContainerError::UnsupportedVersion(version));
        }
        let level = cur.u8(Section::Header)?;
        if !(1..=3).contains(&level) {
            return Err(ContainerError::InvalidLevel(level));
        }
        let flags = cur.u8(Section::Header)?;
        if flags & !(FLAG_TEXT_COMPRESSED | FLAG_PIXEL_NEURAL) != 0 {
            return Err(ContainerError::ReservedFlags(flags));
        }
        let width = cur.u16(Section::Header)?;
        let height = cur.u16(Section::Header)?;

        let sem_len = cur.u16(Section::Semantic)? as usize;
        let semantic = cur.take(sem_len, Section::Semantic)?;

        let j = cur.u8(Section::Maps)? as usize;
        if j > MAX_ITEMS {
            return Err(ContainerError::TooManyItems(j));
        }
        let mut maps = Vec::with_capacity(j);
        for _ in 0..j {
            let rows = cur.u8(Section::Maps)?;
            let cols = cur.u8(Section::Maps)?;
            let len = (rows as usize * cols as usize).div_ceil(8);
            maps.push((rows, cols, cur.take(len, Section::Maps)?));
        }

        let pixel = if flags & FLAG_PIXEL_NEURAL != 0 {
            let len = cur.u32(Section::Pixel)? as usize;
            RawPixel::Neural(cur.take(len, Section::Pixel)?)
        } else {
            let w = cur.u8(Section::Pixel)?;
            let h = cur.u8(Section::Pixel)?;
            let bits = cur.u8(Section::Pixel)?;
            if (w, h, bits) == (0, 0, 0) {
                RawPixel::Empty
            } else {
                if !(1..=8).contains(&bits) {
                    return Err(PixelError::Bits(bits).into());
                }
                RawPixel::Quantized { w, h, bits, data: cur.take(packed_len(w, h, bits), Section::Pixel)? }
            }
        };

        let crc_offset = cur.pos;
        let crc = cur.u32(Section::Crc)?;
        if cur.pos != buf.len() {
            return Err(ContainerError::TrailingBytes(buf.len() - cur.pos));
        }
        Ok(Self {
            version,
            level,
            text_compressed: flags & FLAG_TEXT_COMPRESSED != 0,
            width,
            height,
            semantic,
            maps,
            pixel,
            crc_offset,
            crc,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic::Item;
    use alloc::vec;

    fn minimal() -> MiscContainer {
        MiscContainer {
            version: 1,
            level: 3,
            text_compressed: false,
            width: 1,
            height: 1,
            semantic: SemanticPayload::default(),
            maps: vec![],
            pixel: PixelPayload::Quantized(QuantizedPixels::new(1, 1, 8, vec![10, 20, 30]).unwrap()),
        }
    }

    #[test]
    fn minimal_layout_by_hand() {
        let mut expected: Vec<u8> = vec![
            b'M', b'S', b'C', b'B', // magic
            1, 3, 0, // version, level, flags
            1, 0, 1, 0, // width, height
            3, 0, // sem_len
            0, 0, 0, // J, detail_all_len
            0, // J_maps
            1, 1, 8, 10, 20, 30, // ds_w, ds_h, bits, packed
        ];
        let crc = crc32(&expected);
        expected.extend_from_slice(&crc.to_le_bytes());
        let bytes = minimal().serialize().unwrap();
        assert_eq!(bytes, expected);
        assert_eq!(MiscContainer::parse(&bytes).unwrap(), minimal());
    }

    fn three_maps() -> MiscContainer {
        let mut maps = Vec::new();
        for k in 0..3 {
            let mut m = BinaryMap::filled(8, 8, false).unwrap();
            m.set(k, k, true);
            maps.push(m);
        }
        MiscContainer {
            version: 1,
            level: 1,
            text_compressed: true,
            width: 512,
            height: 512,
            semantic: SemanticPayload::new(
                vec![Item::new("a", "b"), Item::new("c", "d"), Item::new("e", "f")],
                "all",
            ),
            maps,
            pixel: PixelPayload::Empty,
        }
    }

    #[test]
    fn rate_report_sections() {
        let c = three_maps();
        let r = c.rate_report().unwrap();
        assert_eq!(r.map_bits, vec![80, 80, 80]);
        assert_eq!(r.bits(Section::Maps), 8 + 240);
        for &b in &r.map_bits {
            assert!((b as f64 / 262_144.0) < 1e-3);
        }
        assert_eq!(r.bits(Section::Pixel), 24);
        assert_eq!(r.bits(Section::Header), 88);
        assert_eq!(r.total_bits, c.serialize().unwrap().len() as u64 * 8);
        assert_eq!(r.section_bits.iter().map(|s| s.1).sum::<u64>(), r.total_bits);
    }

    #[test]
    fn single_map_bit_changes_one_byte_and_crc() {
        let a = three_maps();
        let mut b = a.clone();
        b.maps[1].set(5, 6, true);
        let (x, y) = (a.serialize().unwrap(), b.serialize().unwrap());
        assert_eq!(x.len(), y.len());
        let diffs: Vec<usize> = (0..x.len()).filter(|&i| x[i] != y[i]).collect();
        let crc_start = x.len() - 4;
        let body: Vec<usize> = diffs.iter().copied().filter(|&i| i < crc_start).collect();
        assert_eq!(body.len(), 1);
        assert!(diffs.iter().any(|&i| i >= crc_start));
    }

    #[test]
    fn parse_error_kinds() {
        let good = minimal().serialize().unwrap();
        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert_eq!(MiscContainer::parse(&bad), Err(ContainerError::BadMagic(*b"XXXX")));

        let mut bad = good.clone();
        *bad.last_mut().unwrap() ^= 0x01;
        assert!(matches!(MiscContainer::parse(&bad), Err(ContainerError::CrcMismatch { .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(MiscContainer::parse(&bad), Err(ContainerError::UnsupportedVersion(2)));

        assert_eq!(
            MiscContainer::parse(&good[..good.len() - 1]),
            Err(ContainerError::Truncated { section: Section::Crc })
        );
        assert_eq!(MiscContainer::parse(&good[..12]), Err(ContainerError::Truncated { section: Section::Semantic }));
        assert_eq!(MiscContainer::parse(&good[..3]), Err(ContainerError::Truncated { section: Section::Header }));

        let mut long = good.clone();
        long.push(0);
        assert_eq!(MiscContainer::parse(&long), Err(ContainerError::TrailingBytes(1)));

        let mut bad = good.clone();
        bad[16] = 4;
        assert_eq!(MiscContainer::parse(&bad), Err(ContainerError::TooManyItems(4)));
    }

    #[test]
    fn serialize_names_violations() {
        let mut c = three_maps();
        c.maps.pop();
        assert_eq!(c.serialize(), Err(ContainerError::ItemCountMismatch { semantic: 3, maps: 2 }));
        let mut c = three_maps();
        c.level = 3;
        assert_eq!(c.serialize(), Err(ContainerError::ItemsAtLevelThree));
        let mut c = three_maps();
        c.semantic.items[0].name = "one two three four".into();
        assert!(matches!(c.serialize(), Err(ContainerError::Semantic(SemanticError::WordBudget { .. }))));
        let mut c = three_maps();
        c.semantic.items.push(Item::default());
        c.maps.push(BinaryMap::filled(8, 8, true).unwrap());
        assert_eq!(c.serialize(), Err(ContainerError::TooManyItems(4)));
    }

    #[test]
    fn empty_pixel_and_neural_sections() {
        let mut c = minimal();
        c.pixel = PixelPayload::Empty;
        let r = c.rate_report().unwrap();
        assert_eq!(r.bits(Section::Pixel), 24);
        assert_eq!(MiscContainer::parse(&c.serialize().unwrap()).unwrap(), c);

        c.pixel = PixelPayload::Neural(vec![1, 2, 3, 4, 5]);
        let bytes = c.serialize().unwrap();
        assert_eq!(bytes[6], FLAG_PIXEL_NEURAL);
        assert_eq!(MiscContainer::parse(&bytes).unwrap(), c);
        assert_eq!(c.rate_report().unwrap().bits(Section::Pixel), (4 + 5) * 8);
    }

    #[test]
    fn non_canonical_padding_rejected() {
        let mut c = three_maps();
        c.maps[0] = BinaryMap::filled(9, 9, true).unwrap();
        let mut bytes = c.serialize().unwrap();
        // last packed byte of the first map sits just before the second map entry
        let sem_len = u16::from_le_bytes([bytes[11], bytes[12]]) as usize;
        let map0_last = 13 + sem_len + 1 + 2 + 10;
        bytes[map0_last] |= 0x01;
        let n = bytes.len() - 4;
        let crc = crc32(&bytes[..n]);
        bytes[n..].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(MiscContainer::parse(&bytes), Err(ContainerError::Map(MapError::Padding)));
    }
}
