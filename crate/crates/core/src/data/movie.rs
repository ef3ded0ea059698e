use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::DataError;

/// Heading channels per pixel: `[vol, spd] x [NE, SE, SW, NW]`.
pub const CHANNELS: usize = 8;

/// Minutes between consecutive frames.
pub const FRAME_MINUTES: usize = 5;

/// Frames in one day at 5-minute resolution.
pub const FRAMES_PER_DAY: usize = 24 * 60 / FRAME_MINUTES;

const MAGIC: &[u8; 4] = b"TMV1";
const HEADER_LEN: usize = 20;

/// Channel index under a point reflection: headings NE<->SW and SE<->NW swap
/// for both volume and speed.
pub fn mirror_channel(c: usize) -> usize {
    (c + 4) % CHANNELS
}

/// uint8 movie `[T][H][W][8]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficMovie {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl TrafficMovie {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self, DataError> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(DataError::invalid(format!(
                "movie dimensions must be positive, got {frames}x{height}x{width}"
            )));
        }
        let expected = frames * height * width * CHANNELS;
        if data.len() != expected {
            return Err(DataError::Truncated {
                expected,
                actual: data.len(),
            });
        }
        Ok(TrafficMovie {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        TrafficMovie {
            frames,
            height,
            width,
            data: vec![0; frames * height * width * CHANNELS],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    fn offset(&self, t: usize, r: usize, c: usize) -> usize {
        ((t * self.height + r) * self.width + c) * CHANNELS
    }

    /// The 8 channels of one pixel in one frame.
    pub fn pixel(&self, t: usize, r: usize, c: usize) -> &[u8] {
        let o = self.offset(t, r, c);
        &self.data[o..o + CHANNELS]
    }

    pub fn pixel_mut(&mut self, t: usize, r: usize, c: usize) -> &mut [u8] {
        let o = self.offset(t, r, c);
        &mut self.data[o..o + CHANNELS]
    }

    /// One full frame `[H][W][8]`.
    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.height * self.width * CHANNELS;
        &self.data[t * n..(t + 1) * n]
    }

    /// Point-reflect every frame and swap opposite heading channels.
    pub fn mirrored(&self) -> TrafficMovie {
        let mut out = TrafficMovie::zeros(self.frames, self.height, self.width);
        for t in 0..self.frames {
            for r in 0..self.height {
                for c in 0..self.width {
                    let src = self.pixel(t, r, c);
                    let dst = out.pixel_mut(t, self.height - 1 - r, self.width - 1 - c);
                    for (ch, &v) in src.iter().enumerate() {
                        dst[mirror_channel(ch)] = v;
                    }
                }
            }
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len());
        out.extend_from_slice(MAGIC);
        for v in [self.frames, self.height, self.width, CHANNELS] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DataError> {
        if bytes.len() < HEADER_LEN {
            return Err(DataError::Truncated {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(DataError::BadMagic {
                expected: "TMV1",
                found: bytes[..4].to_vec(),
            });
        }
        let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
        let (t, h, w, c) = (field(0), field(1), field(2), field(3));
        if c != CHANNELS {
            return Err(DataError::Channels(c));
        }
        let expected = t
            .checked_mul(h)
            .and_then(|v| v.checked_mul(w))
            .and_then(|v| v.checked_mul(c))
            .ok_or_else(|| DataError::invalid("movie dimensions overflow"))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(DataError::Truncated {
                expected,
                actual: payload.len(),
            });
        }
        TrafficMovie::new(t, h, w, payload.to_vec())
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        let mut f = BufWriter::new(File::create(path).map_err(|e| DataError::io(path, e))?);
        f.write_all(&self.encode()).map_err(|e| DataError::io(path, e))?;
        f.flush().map_err(|e| DataError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(|e| DataError::io(path, e))?)
            .read_to_end(&mut bytes)
            .map_err(|e| DataError::io(path, e))?;
        TrafficMovie::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn movie_strategy() -> impl Strategy<Value = TrafficMovie> {
        (1usize..4, 1usize..6, 1usize..6).prop_flat_map(|(t, h, w)| {
            proptest::collection::vec(any::<u8>(), t * h * w * CHANNELS)
                .prop_map(move |d| TrafficMovie::new(t, h, w, d).unwrap())
        })
    }

    #[test]
    fn header_layout() {
        let m = TrafficMovie::zeros(24, 16, 16);
        let bytes = m.encode();
        assert_eq!(bytes.len(), 20 + 24 * 16 * 16 * 8);
        assert_eq!(&bytes[..4], b"TMV1");
        assert_eq!(&bytes[4..8], &24u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &8u32.to_le_bytes());
    }

    #[test]
    fn truncated_payload_reports_counts() {
        let mut bytes = TrafficMovie::zeros(2, 2, 2).encode();
        bytes.truncate(bytes.len() - 3);
        let err = TrafficMovie::decode(&bytes).unwrap_err();
        assert!(matches!(err, DataError::Truncated { expected: 64, actual: 61 }));
        assert!(err.to_string().contains("64") && err.to_string().contains("61"));
    }

    #[test]
    fn bad_magic_and_channels() {
        let mut bytes = TrafficMovie::zeros(1, 1, 1).encode();
        bytes[0] = b'X';
        assert!(matches!(TrafficMovie::decode(&bytes), Err(DataError::BadMagic { .. })));
        let mut bytes = TrafficMovie::zeros(1, 1, 1).encode();
        bytes[16] = 3;
        assert!(matches!(TrafficMovie::decode(&bytes), Err(DataError::Channels(3))));
    }

    #[test]
    fn single_voxel_mirror() {
        let mut m = TrafficMovie::zeros(1, 3, 4);
        m.pixel_mut(0, 0, 1)[0] = 9; // vol_NE
        let mm = m.mirrored();
        assert_eq!(mm.pixel(0, 2, 2)[4], 9); // vol_SW
        assert_eq!(mm.data().iter().filter(|&&v| v != 0).count(), 1);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tmv");
        let mut m = TrafficMovie::zeros(2, 3, 2);
        m.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = (i * 7 % 251) as u8);
        m.write(&path).unwrap();
        assert_eq!(TrafficMovie::read(&path).unwrap(), m);
    }

    proptest! {
        #[test]
        fn codec_round_trip(m in movie_strategy()) {
            prop_assert_eq!(TrafficMovie::decode(&m.encode()).unwrap(), m);
        }

        #[test]
        fn mirror_is_involution(m in movie_strategy()) {
            prop_assert_eq!(m.mirrored().mirrored(), m);
        }
    }
}
