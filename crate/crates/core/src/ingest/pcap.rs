//! Classic libpcap file format (microsecond timestamps, either byte order).

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::ingest::packet::Timestamp;

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_IEEE802_11_RADIOTAP: u32 = 127;

const MAGIC_MICROS: u32 = 0xA1B2_C3D4;
const MAGIC_NANOS: u32 = 0xA1B2_3C4D;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
/// Upper bound on a sane record; anything larger is treated as corruption.
const MAX_RECORD_LEN: u32 = 256 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endianness {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlobalHeader {
    pub endianness: Endianness,
    pub version_major: u16,
    pub version_minor: u16,
    pub snaplen: u32,
    pub linktype: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub ts: Timestamp,
    pub orig_len: u32,
    pub data: Vec<u8>,
}

pub struct PcapReader<R> {
    inner: R,
    header: GlobalHeader,
    truncated: usize,
    done: bool,
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut buf = [0u8; GLOBAL_HEADER_LEN];
        read_full(&mut inner, &mut buf)
            .and_then(|n| {
                if n == GLOBAL_HEADER_LEN {
                    Ok(())
                } else {
                    Err(io::Error::new(io::ErrorKind::UnexpectedEof, "short header"))
                }
            })
            .map_err(|_| Error::Capture("global header shorter than 24 bytes".into()))?;

        let le = u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]);
        let endianness = match le {
            MAGIC_MICROS => Endianness::Little,
            m if m.swap_bytes() == MAGIC_MICROS => Endianness::Big,
            MAGIC_NANOS => {
                return Err(Error::Unsupported(
                    "nanosecond-resolution pcap is not supported".into(),
                ))
            }
            m if m.swap_bytes() == MAGIC_NANOS => {
                return Err(Error::Unsupported(
                    "nanosecond-resolution pcap is not supported".into(),
                ))
            }
            other => return Err(Error::Capture(format!("bad magic number {other:#010x}"))),
        };
        let u16_at = |i: usize| match endianness {
            Endianness::Little => u16::from_le_bytes([buf[i], buf[i + 1]]),
            Endianness::Big => u16::from_be_bytes([buf[i], buf[i + 1]]),
        };
        let u32_at = |i: usize| {
            let b = [buf[i], buf[i + 1], buf[i + 2], buf[i + 3]];
            match endianness {
                Endianness::Little => u32::from_le_bytes(b),
                Endianness::Big => u32::from_be_bytes(b),
            }
        };
        let header = GlobalHeader {
            endianness,
            version_major: u16_at(4),
            version_minor: u16_at(6),
            snaplen: u32_at(16),
            linktype: u32_at(20),
        };
        if header.version_major != 2 {
            return Err(Error::Capture(format!(
                "unsupported pcap version {}.{}",
                header.version_major, header.version_minor
            )));
        }
        Ok(PcapReader {
            inner,
            header,
            truncated: 0,
            done: false,
        })
    }

    pub fn header(&self) -> &GlobalHeader {
        &self.header
    }

    /// Records dropped because the file ended (or was corrupt) mid-record.
    pub fn truncated(&self) -> usize {
        self.truncated
    }

    fn u32(&self, b: &[u8]) -> u32 {
        let b = [b[0], b[1], b[2], b[3]];
        match self.header.endianness {
            Endianness::Little => u32::from_le_bytes(b),
            Endianness::Big => u32::from_be_bytes(b),
        }
    }

    pub fn next_record(&mut self) -> Result<Option<RawRecord>> {
        if self.done {
            return Ok(None);
        }
        let mut hdr = [0u8; RECORD_HEADER_LEN];
        let n = read_full(&mut self.inner, &mut hdr)?;
        if n == 0 {
            self.done = true;
            return Ok(None);
        }
        if n < RECORD_HEADER_LEN {
            self.truncated += 1;
            self.done = true;
            return Ok(None);
        }
        let ts_sec = self.u32(&hdr[0..4]);
        let ts_usec = self.u32(&hdr[4..8]);
        let incl_len = self.u32(&hdr[8..12]);
        let orig_len = self.u32(&hdr[12..16]);
        if incl_len > MAX_RECORD_LEN || ts_usec >= 1_000_000 {
            log::warn!("corrupt record header (incl_len={incl_len}, usec={ts_usec}); stopping");
            self.truncated += 1;
            self.done = true;
            return Ok(None);
        }
        let mut data = vec![0u8; incl_len as usize];
        let got = read_full(&mut self.inner, &mut data)?;
        if got < data.len() {
            self.truncated += 1;
            self.done = true;
            return Ok(None);
        }
        Ok(Some(RawRecord {
            ts: Timestamp(ts_sec as i64 * 1_000_000 + ts_usec as i64),
            orig_len,
            data,
        }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<RawRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub struct PcapWriter<W> {
    inner: W,
    endianness: Endianness,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W, linktype: u32, endianness: Endianness) -> io::Result<Self> {
        let mut hdr = Vec::with_capacity(GLOBAL_HEADER_LEN);
        let put32 = |v: &mut Vec<u8>, x: u32| match endianness {
            Endianness::Little => v.extend_from_slice(&x.to_le_bytes()),
            Endianness::Big => v.extend_from_slice(&x.to_be_bytes()),
        };
        let put16 = |v: &mut Vec<u8>, x: u16| match endianness {
            Endianness::Little => v.extend_from_slice(&x.to_le_bytes()),
            Endianness::Big => v.extend_from_slice(&x.to_be_bytes()),
        };
        put32(&mut hdr, MAGIC_MICROS);
        put16(&mut hdr, 2);
        put16(&mut hdr, 4);
        put32(&mut hdr, 0); // thiszone
        put32(&mut hdr, 0); // sigfigs
        put32(&mut hdr, 65535);
        put32(&mut hdr, linktype);
        inner.write_all(&hdr)?;
        Ok(PcapWriter { inner, endianness })
    }

    pub fn write_record(&mut self, ts: Timestamp, data: &[u8], orig_len: u32) -> io::Result<()> {
        let us = ts.micros();
        let fields = [
            us.div_euclid(1_000_000) as u32,
            us.rem_euclid(1_000_000) as u32,
            data.len() as u32,
            orig_len,
        ];
        for f in fields {
            match self.endianness {
                Endianness::Little => self.inner.write_all(&f.to_le_bytes())?,
                Endianness::Big => self.inner.write_all(&f.to_be_bytes())?,
            }
        }
        self.inner.write_all(data)
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(endianness: Endianness) {
        let mut w = PcapWriter::new(Vec::new(), LINKTYPE_ETHERNET, endianness).unwrap();
        w.write_record(Timestamp(1_500_000_000_123_456), &[1, 2, 3], 60).unwrap();
        w.write_record(Timestamp(1_500_000_001_000_001), &[], 0).unwrap();
        let bytes = w.into_inner();
        let mut r = PcapReader::new(bytes.as_slice()).unwrap();
        assert_eq!(r.header().endianness, endianness);
        assert_eq!(r.header().linktype, LINKTYPE_ETHERNET);
        let recs: Vec<_> = r.by_ref().collect::<Result<_>>().unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].ts, Timestamp(1_500_000_000_123_456));
        assert_eq!(recs[0].data, vec![1, 2, 3]);
        assert_eq!(recs[0].orig_len, 60);
        assert_eq!(r.truncated(), 0);
    }

    #[test]
    fn both_byte_orders() {
        roundtrip(Endianness::Little);
        roundtrip(Endianness::Big);
    }

    #[test]
    fn empty_capture_has_no_records() {
        let w = PcapWriter::new(Vec::new(), LINKTYPE_ETHERNET, Endianness::Little).unwrap();
        let bytes = w.into_inner();
        let mut r = PcapReader::new(bytes.as_slice()).unwrap();
        assert!(r.next().is_none());
    }

    #[test]
    fn truncated_record_is_counted_and_skipped() {
        let mut w = PcapWriter::new(Vec::new(), LINKTYPE_ETHERNET, Endianness::Little).unwrap();
        w.write_record(Timestamp(1_000_000), &[0; 40], 40).unwrap();
        w.write_record(Timestamp(2_000_000), &[0; 40], 40).unwrap();
        let mut bytes = w.into_inner();
        bytes.truncate(bytes.len() - 10);
        let mut r = PcapReader::new(bytes.as_slice()).unwrap();
        let recs: Vec<_> = r.by_ref().collect::<Result<_>>().unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(r.truncated(), 1);
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(
            PcapReader::new(&[0u8; 10][..]),
            Err(Error::Capture(_))
        ));
        let mut junk = [0u8; 24];
        junk[0] = 0x42;
        assert!(matches!(PcapReader::new(&junk[..]), Err(Error::Capture(_))));
        let mut nanos = [0u8; 24];
        nanos[..4].copy_from_slice(&MAGIC_NANOS.to_le_bytes());
        assert!(matches!(
            PcapReader::new(&nanos[..]),
            Err(Error::Unsupported(_))
        ));
    }
}
