//! Binary layout: "HOMTAG01", u64 LE record count, then 9-byte records of
//! u8 channel and u64 LE timestamp (ps). Text layout: CSV with header
//! `channel,timestamp_ps`.

use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};

use super::CoincidenceError;
use crate::mc::{Tag, TagStream, CHANNEL_D1, CHANNEL_HERALD};

pub const MAGIC: &[u8; 8] = b"HOMTAG01";
pub const RECORD_BYTES: usize = 9;
const HEADER_BYTES: u64 = 16;

struct Validator {
    index: u64,
    previous: u64,
}

impl Validator {
    fn new() -> Self {
        Validator {
            index: 0,
            previous: 0,
        }
    }

    fn check(&mut self, channel: u64, timestamp: u64) -> Result<Tag, CoincidenceError> {
        let index = self.index;
        if !(CHANNEL_D1 as u64..=CHANNEL_HERALD as u64).contains(&channel) {
            return Err(CoincidenceError::Channel { index, channel });
        }
        if timestamp < self.previous {
            return Err(CoincidenceError::Order {
                index,
                previous: self.previous,
                timestamp,
            });
        }
        self.previous = timestamp;
        self.index += 1;
        Ok(Tag::new(timestamp, channel as u8))
    }
}

/// Validating single-pass reader of the binary format.
pub struct TagReader<R: Read> {
    inner: R,
    declared: u64,
    validator: Validator,
    done: bool,
}

impl<R: Read> TagReader<R> {
    pub fn new(mut inner: R) -> Result<Self, CoincidenceError> {
        let mut header = [0u8; HEADER_BYTES as usize];
        let got = read_full(&mut inner, &mut header)?;
        if got < 8 || &header[..8] != MAGIC {
            return Err(CoincidenceError::Format {
                offset: 0,
                detail: "bad magic, expected \"HOMTAG01\"".into(),
            });
        }
        if got < header.len() {
            return Err(CoincidenceError::Format {
                offset: got as u64,
                detail: "truncated header: missing record count".into(),
            });
        }
        let declared = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
        Ok(TagReader {
            inner,
            declared,
            validator: Validator::new(),
            done: false,
        })
    }

    /// Record count from the header.
    pub fn declared_count(&self) -> u64 {
        self.declared
    }

    fn offset(&self) -> u64 {
        HEADER_BYTES + self.validator.index * RECORD_BYTES as u64
    }

    fn next_record(&mut self) -> Result<Option<Tag>, CoincidenceError> {
        let mut rec = [0u8; RECORD_BYTES];
        let got = read_full(&mut self.inner, &mut rec)?;
        let index = self.validator.index;
        if index == self.declared {
            if got > 0 {
                return Err(CoincidenceError::Format {
                    offset: self.offset(),
                    detail: format!(
                        "header declares {} records but more data follows",
                        self.declared
                    ),
                });
            }
            return Ok(None);
        }
        if got < RECORD_BYTES {
            let detail = if got == 0 {
                format!("expected {} records, found {index}", self.declared)
            } else {
                format!(
                    "expected {} records, found {index} and a truncated record of {got} bytes",
                    self.declared
                )
            };
            return Err(CoincidenceError::Format {
                offset: self.offset() + got as u64,
                detail,
            });
        }
        let ts = u64::from_le_bytes(rec[1..].try_into().expect("8 bytes"));
        self.validator.check(rec[0] as u64, ts).map(Some)
    }
}

impl<R: Read> Iterator for TagReader<R> {
    type Item = Result<Tag, CoincidenceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(t)) => Some(Ok(t)),
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

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize, CoincidenceError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(got)
}

pub fn read_binary<R: Read>(r: R) -> Result<TagStream, CoincidenceError> {
    let records = TagReader::new(r)?.collect::<Result<Vec<_>, _>>()?;
    Ok(TagStream { records })
}

/// Streaming binary writer; the record count is patched in on `finish`.
pub struct TagWriter<W: Write + Seek> {
    inner: W,
    count: u64,
    last: u64,
}

impl<W: Write + Seek> TagWriter<W> {
    pub fn new(mut inner: W) -> Result<Self, CoincidenceError> {
        inner.write_all(MAGIC)?;
        inner.write_all(&0u64.to_le_bytes())?;
        Ok(TagWriter {
            inner,
            count: 0,
            last: 0,
        })
    }

    pub fn write(&mut self, tags: &[Tag]) -> Result<(), CoincidenceError> {
        let mut buf = Vec::with_capacity(tags.len() * RECORD_BYTES);
        for t in tags {
            if t.timestamp < self.last {
                return Err(CoincidenceError::Order {
                    index: self.count,
                    previous: self.last,
                    timestamp: t.timestamp,
                });
            }
            self.last = t.timestamp;
            self.count += 1;
            buf.push(t.channel);
            buf.extend_from_slice(&t.timestamp.to_le_bytes());
        }
        self.inner.write_all(&buf)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, CoincidenceError> {
        self.inner.seek(SeekFrom::Start(8))?;
        self.inner.write_all(&self.count.to_le_bytes())?;
        self.inner.seek(SeekFrom::End(0))?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_binary<W: Write>(mut w: W, tags: &[Tag]) -> Result<(), CoincidenceError> {
    let mut buf = Vec::with_capacity(16 + tags.len() * RECORD_BYTES);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(tags.len() as u64).to_le_bytes());
    for t in tags {
        buf.push(t.channel);
        buf.extend_from_slice(&t.timestamp.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_csv<W: Write>(w: W, tags: &[Tag]) -> Result<(), CoincidenceError> {
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| CoincidenceError::Io(e.to_string());
    out.write_record(["channel", "timestamp_ps"]).map_err(io)?;
    for t in tags {
        out.write_record([t.channel.to_string(), t.timestamp.to_string()])
            .map_err(io)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<TagStream, CoincidenceError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let headers = rdr
        .headers()
        .map_err(|e| CoincidenceError::Format {
            offset: 0,
            detail: e.to_string(),
        })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["channel", "timestamp_ps"] {
        return Err(CoincidenceError::Format {
            offset: 0,
            detail: "expected header \"channel,timestamp_ps\"".into(),
        });
    }
    let mut v = Validator::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| CoincidenceError::Format {
            offset: e.position().map_or(0, |p| p.byte()),
            detail: e.to_string(),
        })?;
        let offset = row.position().map_or(0, |p| p.byte());
        let field = |k: usize| -> Result<u64, CoincidenceError> {
            row.get(k)
                .and_then(|s| s.trim().parse::<u64>().ok())
                .ok_or_else(|| CoincidenceError::Format {
                    offset,
                    detail: format!("record {}: field {k} is not an unsigned integer", v.index),
                })
        };
        let (ch, ts) = (field(0)?, field(1)?);
        records.push(v.check(ch, ts)?);
    }
    Ok(TagStream { records })
}

/// Binary when the input starts with the magic, CSV otherwise.
pub fn parse_tags<R: Read>(r: R) -> Result<TagStream, CoincidenceError> {
    let mut r = BufReader::new(r);
    let head = r.fill_buf()?;
    if head.starts_with(MAGIC) || head.starts_with(b"HOMTAG") {
        read_binary(r)
    } else if head.is_empty() {
        Err(CoincidenceError::Format {
            offset: 0,
            detail: "empty input".into(),
        })
    } else {
        read_csv(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Tag> {
        vec![Tag::new(5, 3), Tag::new(1005, 1), Tag::new(2005, 2)]
    }

    #[test]
    fn binary_round_trip() {
        let mut buf = Vec::new();
        write_binary(&mut buf, &sample()).unwrap();
        assert_eq!(buf.len(), 16 + 3 * 9);
        assert_eq!(read_binary(&buf[..]).unwrap().records, sample());
        let mut again = Vec::new();
        write_binary(&mut again, &read_binary(&buf[..]).unwrap().records).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn streaming_writer_matches() {
        let mut direct = Vec::new();
        write_binary(&mut direct, &sample()).unwrap();
        let mut w = TagWriter::new(std::io::Cursor::new(Vec::new())).unwrap();
        w.write(&sample()[..1]).unwrap();
        w.write(&sample()[1..]).unwrap();
        assert_eq!(w.finish().unwrap().into_inner(), direct);
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &sample()).unwrap();
        assert!(buf.starts_with(b"channel,timestamp_ps\n"));
        assert_eq!(parse_tags(&buf[..]).unwrap().records, sample());
    }

    #[test]
    fn empty_file() {
        let mut buf = Vec::new();
        write_binary(&mut buf, &[]).unwrap();
        assert!(parse_tags(&buf[..]).unwrap().records.is_empty());
    }

    #[test]
    fn short_count_names_expected_and_actual() {
        let mut buf = Vec::new();
        write_binary(&mut buf, &sample()[..1]).unwrap();
        buf[8] = 2;
        let err = read_binary(&buf[..]).unwrap_err();
        match &err {
            CoincidenceError::Format { detail, offset } => {
                assert!(detail.contains("expected 2") && detail.contains("found 1"), "{detail}");
                assert_eq!(*offset, 25);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn bad_magic_order_and_channel() {
        assert!(matches!(
            read_binary(&b"NOTATAG0\0\0\0\0\0\0\0\0"[..]),
            Err(CoincidenceError::Format { offset: 0, .. })
        ));
        let mut buf = Vec::new();
        write_binary(&mut buf, &[Tag::new(10, 1), Tag::new(9, 2)]).unwrap();
        assert!(matches!(
            read_binary(&buf[..]),
            Err(CoincidenceError::Order { index: 1, .. })
        ));
        let mut buf = Vec::new();
        write_binary(&mut buf, &[Tag::new(10, 4)]).unwrap();
        assert!(matches!(
            read_binary(&buf[..]),
            Err(CoincidenceError::Channel { index: 0, channel: 4 })
        ));
        assert!(matches!(
            parse_tags(&b"channel,timestamp_ps\n1,10\n0,11\n"[..]),
            Err(CoincidenceError::Channel { index: 1, .. })
        ));
    }

    #[test]
    fn trailing_data_rejected() {
        let mut buf = Vec::new();
        write_binary(&mut buf, &sample()).unwrap();
        buf[8] = 2;
        assert!(matches!(read_binary(&buf[..]), Err(CoincidenceError::Format { .. })));
    }
}
