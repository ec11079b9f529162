//! Classic libpcap files with Ethernet link type.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::TrafficError;
use crate::packet::{parse_frame, serialize_frame, PacketHeaderView};

const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
const MAGIC_NANOS: u32 = 0xa1b2_3c4d;
pub const LINKTYPE_ETHERNET: u32 = 1;

/// Global header of a capture file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PcapHeader {
    pub big_endian: bool,
    pub nanosecond: bool,
    pub version_major: u16,
    pub version_minor: u16,
    pub thiszone: i32,
    pub sigfigs: u32,
    pub snaplen: u32,
    pub linktype: u32,
}

impl Default for PcapHeader {
    fn default() -> Self {
        PcapHeader {
            big_endian: false,
            nanosecond: false,
            version_major: 2,
            version_minor: 4,
            thiszone: 0,
            sigfigs: 0,
            snaplen: 65_535,
            linktype: LINKTYPE_ETHERNET,
        }
    }
}

impl PcapHeader {
    fn u32(&self, b: [u8; 4]) -> u32 {
        if self.big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        }
    }

    fn put_u32(&self, v: u32) -> [u8; 4] {
        if self.big_endian {
            v.to_be_bytes()
        } else {
            v.to_le_bytes()
        }
    }

    fn put_u16(&self, v: u16) -> [u8; 2] {
        if self.big_endian {
            v.to_be_bytes()
        } else {
            v.to_le_bytes()
        }
    }

    fn ticks_per_second(&self) -> u32 {
        if self.nanosecond {
            1_000_000_000
        } else {
            1_000_000
        }
    }

    fn to_bytes(self) -> [u8; 24] {
        let mut b = [0u8; 24];
        let magic = if self.nanosecond { MAGIC_NANOS } else { MAGIC_MICROS };
        b[0..4].copy_from_slice(&self.put_u32(magic));
        b[4..6].copy_from_slice(&self.put_u16(self.version_major));
        b[6..8].copy_from_slice(&self.put_u16(self.version_minor));
        b[8..12].copy_from_slice(&self.put_u32(self.thiszone as u32));
        b[12..16].copy_from_slice(&self.put_u32(self.sigfigs));
        b[16..20].copy_from_slice(&self.put_u32(self.snaplen));
        b[20..24].copy_from_slice(&self.put_u32(self.linktype));
        b
    }

    fn from_bytes(b: &[u8; 24]) -> Result<Self, TrafficError> {
        let le = u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        let be = u32::from_be_bytes([b[0], b[1], b[2], b[3]]);
        let (big_endian, nanosecond) = match (le, be) {
            (MAGIC_MICROS, _) => (false, false),
            (MAGIC_NANOS, _) => (false, true),
            (_, MAGIC_MICROS) => (true, false),
            (_, MAGIC_NANOS) => (true, true),
            _ => return Err(TrafficError::BadMagic(le)),
        };
        let probe = PcapHeader { big_endian, ..Default::default() };
        let u16_at = |i: usize| {
            if big_endian {
                u16::from_be_bytes([b[i], b[i + 1]])
            } else {
                u16::from_le_bytes([b[i], b[i + 1]])
            }
        };
        let u32_at = |i: usize| probe.u32([b[i], b[i + 1], b[i + 2], b[i + 3]]);
        let h = PcapHeader {
            big_endian,
            nanosecond,
            version_major: u16_at(4),
            version_minor: u16_at(6),
            thiszone: u32_at(8) as i32,
            sigfigs: u32_at(12),
            snaplen: u32_at(16),
            linktype: u32_at(20),
        };
        if h.linktype != LINKTYPE_ETHERNET {
            return Err(TrafficError::UnsupportedLinkType(h.linktype));
        }
        Ok(h)
    }
}

/// Fills `buf` completely, or reports how many bytes were available.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// Streaming reader. Frames that fail to parse, and a truncated final
/// record, are skipped and counted.
pub struct PcapReader<R: Read> {
    inner: R,
    header: PcapHeader,
    skipped: u64,
    done: bool,
}

impl PcapReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, TrafficError> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, TrafficError> {
        let mut b = [0u8; 24];
        if read_full(&mut inner, &mut b)? < 24 {
            return Err(TrafficError::BadMagic(0));
        }
        let header = PcapHeader::from_bytes(&b)?;
        Ok(PcapReader { inner, header, skipped: 0, done: false })
    }

    pub fn header(&self) -> PcapHeader {
        self.header
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    fn next_record(&mut self) -> Result<Option<PacketHeaderView>, TrafficError> {
        loop {
            let mut rh = [0u8; 16];
            let n = read_full(&mut self.inner, &mut rh)?;
            if n == 0 {
                return Ok(None);
            }
            if n < 16 {
                self.skipped += 1;
                return Ok(None);
            }
            let h = &self.header;
            let sec = h.u32([rh[0], rh[1], rh[2], rh[3]]);
            let frac = h.u32([rh[4], rh[5], rh[6], rh[7]]);
            let incl = h.u32([rh[8], rh[9], rh[10], rh[11]]) as usize;
            let mut data = vec![0u8; incl];
            if read_full(&mut self.inner, &mut data)? < incl {
                self.skipped += 1;
                return Ok(None);
            }
            let ts = sec as f64 + frac as f64 / h.ticks_per_second() as f64;
            match parse_frame(&data, ts) {
                Ok(view) => return Ok(Some(view)),
                Err(_) => self.skipped += 1,
            }
        }
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<PacketHeaderView, TrafficError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(v)) => Some(Ok(v)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub struct PcapWriter<W: Write> {
    inner: W,
    header: PcapHeader,
}

impl PcapWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, header: PcapHeader) -> Result<Self, TrafficError> {
        Self::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W, header: PcapHeader) -> Result<Self, TrafficError> {
        inner.write_all(&header.to_bytes())?;
        Ok(PcapWriter { inner, header })
    }

    /// Writes one frame. The timestamp is rounded to the file's resolution.
    pub fn write(&mut self, view: &PacketHeaderView) -> Result<(), TrafficError> {
        let h = self.header;
        let bytes = serialize_frame(view);
        let tps = h.ticks_per_second() as f64;
        let mut sec = view.timestamp.max(0.0).floor();
        let mut frac = ((view.timestamp.max(0.0) - sec) * tps).round();
        if frac >= tps {
            sec += 1.0;
            frac -= tps;
        }
        let mut rec = Vec::with_capacity(16 + bytes.len());
        rec.extend_from_slice(&h.put_u32(sec as u32));
        rec.extend_from_slice(&h.put_u32(frac as u32));
        rec.extend_from_slice(&h.put_u32(bytes.len() as u32));
        rec.extend_from_slice(&h.put_u32(bytes.len() as u32));
        rec.extend_from_slice(&bytes);
        self.inner.write_all(&rec)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, TrafficError> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Reads every parseable frame of a file; returns the frames, the header
/// and the number of skipped records.
pub fn read_pcap(path: impl AsRef<Path>) -> Result<(Vec<PacketHeaderView>, PcapHeader, u64), TrafficError> {
    let mut r = PcapReader::open(path)?;
    let mut out = Vec::new();
    for v in r.by_ref() {
        out.push(v?);
    }
    Ok((out, r.header(), r.skipped()))
}

pub fn write_pcap<'a, I>(path: impl AsRef<Path>, header: PcapHeader, frames: I) -> Result<(), TrafficError>
where
    I: IntoIterator<Item = &'a PacketHeaderView>,
{
    let mut w = PcapWriter::create(path, header)?;
    for f in frames {
        w.write(f)?;
    }
    w.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::Ipv4Addr;

    fn sample() -> Vec<PacketHeaderView> {
        let a = Ipv4Addr::new(10, 0, 0, 5);
        let b = Ipv4Addr::new(10, 0, 0, 9);
        vec![
            PacketHeaderView::udp_packet(1.25, (a, 53), (b, 4444)).with_payload(vec![1, 2, 3]),
            PacketHeaderView::tcp_packet(2.5, (b, 4000), (a, 80)),
        ]
    }

    #[test]
    fn round_trip_both_endians() {
        for big_endian in [false, true] {
            let header = PcapHeader { big_endian, ..Default::default() };
            let mut w = PcapWriter::new(Vec::new(), header).unwrap();
            for v in sample() {
                w.write(&v).unwrap();
            }
            let bytes = w.finish().unwrap();
            let r = PcapReader::new(&bytes[..]).unwrap();
            assert_eq!(r.header(), header);
            let back: Vec<_> = r.map(Result::unwrap).collect();
            let mut w2 = PcapWriter::new(Vec::new(), header).unwrap();
            for v in &back {
                w2.write(v).unwrap();
            }
            assert_eq!(w2.finish().unwrap(), bytes);
            assert_eq!(back[0].timestamp, 1.25);
            assert_eq!(back[0].udp().unwrap().src_port, 53);
        }
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(matches!(PcapReader::new(&[0u8; 24][..]), Err(TrafficError::BadMagic(_))));
        let mut w = PcapWriter::new(Vec::new(), PcapHeader::default()).unwrap();
        for v in sample() {
            w.write(&v).unwrap();
        }
        let mut bytes = w.finish().unwrap();
        bytes.truncate(bytes.len() - 5);
        let mut r = PcapReader::new(&bytes[..]).unwrap();
        assert_eq!(r.by_ref().count(), 1);
        assert_eq!(r.skipped(), 1);
    }
}
