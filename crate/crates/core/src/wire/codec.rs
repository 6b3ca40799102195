//! Canonical little-endian framing.
//!
//! ```text
//! "FEDW" | version u16 | tag u8 | payload length u64 | payload | crc32 u32
//! ```
//!
//! The CRC-32 covers every byte before it. A weight payload is a u32 tensor
//! count followed, per tensor, by a u16 name length, the UTF-8 name, a u8
//! rank, u32 dims and the raw f32 data.

use std::time::Duration;

use super::{ClientMetrics, Message, SessionConfig, WireError};
use crate::coordinator::{AggregationMode, RoundPlan};
use crate::nn::{ArchitectureSpec, ModelWeights, OptimConfig, StageSpec, Tensor};
use crate::trainer::{DeviceClass, NodeProfile};

pub const MAGIC: [u8; 4] = *b"FEDW";
pub const PROTOCOL_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 1 + 8;
pub const CHECKSUM_LEN: usize = 4;
pub const DEFAULT_MAX_FRAME: usize = 256 << 20;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(u32::try_from(s.len()).expect("string shorter than 4 GiB"));
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn malformed(what: impl std::fmt::Display) -> WireError {
    WireError::Protocol(format!("malformed payload: {what}"))
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(malformed(format!(
                "needs {n} more bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn usize(&mut self) -> Result<usize, WireError> {
        usize::try_from(self.u64()?).map_err(malformed)
    }
    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn string(&mut self, len: usize) -> Result<String, WireError> {
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(malformed)
    }
    fn str(&mut self) -> Result<String, WireError> {
        let len = self.u32()? as usize;
        self.string(len)
    }
    fn finish(&self) -> Result<(), WireError> {
        if self.pos != self.buf.len() {
            return Err(malformed(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_weights(w: &mut Writer, weights: &ModelWeights) {
    w.u32(u32::try_from(weights.len()).expect("fewer than 2^32 tensors"));
    for (name, t) in weights.entries() {
        w.u16(u16::try_from(name.len()).expect("tensor name shorter than 64 KiB"));
        w.0.extend_from_slice(name.as_bytes());
        w.u8(u8::try_from(t.shape().len()).expect("rank below 256"));
        for &d in t.shape() {
            w.u32(u32::try_from(d).expect("dimension below 2^32"));
        }
        w.0.reserve(t.len() * 4);
        for v in t.data() {
            w.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn get_weights(r: &mut Reader<'_>) -> Result<ModelWeights, WireError> {
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = r.string(name_len)?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| malformed(format!("tensor `{name}` is too large")))?;
        let bytes = r.take(n)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(malformed)?;
        entries.push((name, t));
    }
    ModelWeights::new(entries).map_err(malformed)
}

/// Weight payload bytes on their own (no frame).
pub fn encode_weights(weights: &ModelWeights) -> Vec<u8> {
    let mut w = Writer::default();
    put_weights(&mut w, weights);
    w.0
}

pub fn decode_weights(bytes: &[u8]) -> Result<ModelWeights, WireError> {
    let mut r = Reader::new(bytes);
    let weights = get_weights(&mut r)?;
    r.finish()?;
    Ok(weights)
}

fn put_profile(w: &mut Writer, p: &NodeProfile) {
    w.str(&p.client_id);
    w.usize(p.epochs_per_round);
    w.usize(p.batch_size);
    w.f64(p.train_fraction);
    w.u8(match p.device_class {
        DeviceClass::Gpu => 0,
        DeviceClass::Cpu => 1,
        DeviceClass::Raspberry => 2,
    });
    w.f64(p.speed_iters_per_s);
}

fn get_profile(r: &mut Reader<'_>) -> Result<NodeProfile, WireError> {
    Ok(NodeProfile {
        client_id: r.str()?,
        epochs_per_round: r.usize()?,
        batch_size: r.usize()?,
        train_fraction: r.f64()?,
        device_class: match r.u8()? {
            0 => DeviceClass::Gpu,
            1 => DeviceClass::Cpu,
            2 => DeviceClass::Raspberry,
            t => return Err(malformed(format!("device class {t}"))),
        },
        speed_iters_per_s: r.f64()?,
    })
}

fn put_config(w: &mut Writer, c: &SessionConfig) {
    put_profile(w, &c.profile);
    let a = &c.arch;
    w.usize(a.input_size);
    w.usize(a.channels);
    w.usize(a.num_classes);
    w.usize(a.stem_stride);
    w.u32(a.stages.len() as u32);
    for s in &a.stages {
        w.usize(s.blocks);
        w.usize(s.width);
    }
    w.u32(c.plan.total_rounds);
    w.u64(c.plan.round_timeout.as_secs());
    w.u32(c.plan.round_timeout.subsec_nanos());
    w.u8(match c.plan.aggregation {
        AggregationMode::Weighted => 0,
        AggregationMode::Uniform => 1,
    });
    let o = &c.optim;
    w.f64(o.learning_rate);
    w.f64(o.momentum);
    w.usize(o.patience);
    w.f64(o.factor);
    w.f64(o.min_lr);
    w.f64(o.threshold);
    w.f64(o.clip_norm.unwrap_or(0.0));
    w.u64(c.seed);
}

fn get_config(r: &mut Reader<'_>) -> Result<SessionConfig, WireError> {
    let profile = get_profile(r)?;
    let (input_size, channels, num_classes, stem_stride) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let n_stages = r.u32()? as usize;
    let mut stages = Vec::with_capacity(n_stages.min(64));
    for _ in 0..n_stages {
        stages.push(StageSpec {
            blocks: r.usize()?,
            width: r.usize()?,
        });
    }
    let arch = ArchitectureSpec {
        input_size,
        channels,
        num_classes,
        stem_stride,
        stages,
    };
    let total_rounds = r.u32()?;
    let (secs, nanos) = (r.u64()?, r.u32()?);
    if nanos >= 1_000_000_000 {
        return Err(malformed(format!("timeout nanos {nanos}")));
    }
    let aggregation = match r.u8()? {
        0 => AggregationMode::Weighted,
        1 => AggregationMode::Uniform,
        t => return Err(malformed(format!("aggregation mode {t}"))),
    };
    let plan = RoundPlan {
        total_rounds,
        round_timeout: Duration::new(secs, nanos),
        aggregation,
    };
    let optim = OptimConfig {
        learning_rate: r.f64()?,
        momentum: r.f64()?,
        patience: r.usize()?,
        factor: r.f64()?,
        min_lr: r.f64()?,
        threshold: r.f64()?,
        clip_norm: Some(r.f64()?).filter(|c| *c > 0.0),
    };
    Ok(SessionConfig {
        profile,
        arch,
        plan,
        optim,
        seed: r.u64()?,
    })
}

fn payload(msg: &Message) -> Vec<u8> {
    let mut w = Writer::default();
    match msg {
        Message::Register { client_id, profile } => {
            w.str(client_id);
            put_profile(&mut w, profile);
        }
        Message::ConfigPush(c) => put_config(&mut w, c),
        Message::WeightsDown { round, weights } => {
            w.u32(*round);
            put_weights(&mut w, weights);
        }
        Message::TrainResult {
            round,
            weights,
            sample_count,
            metrics,
        } => {
            w.u32(*round);
            w.u64(*sample_count);
            w.f64(metrics.iterations_per_second);
            w.u32(metrics.epoch_losses.len() as u32);
            for l in &metrics.epoch_losses {
                w.f64(*l);
            }
            w.f64(metrics.wall_time_s);
            w.u64(metrics.steps);
            put_weights(&mut w, weights);
        }
        Message::EvalResult {
            round,
            accuracy,
            loss,
        } => {
            w.u32(*round);
            w.f64(*accuracy);
            w.f64(*loss);
        }
        Message::Finish { reason } => w.str(reason),
    }
    w.0
}

fn parse_payload(tag: u8, bytes: &[u8]) -> Result<Message, WireError> {
    let mut r = Reader::new(bytes);
    let msg = match tag {
        1 => Message::Register {
            client_id: r.str()?,
            profile: get_profile(&mut r)?,
        },
        2 => Message::ConfigPush(Box::new(get_config(&mut r)?)),
        3 => Message::WeightsDown {
            round: r.u32()?,
            weights: get_weights(&mut r)?,
        },
        4 => {
            let round = r.u32()?;
            let sample_count = r.u64()?;
            if sample_count == 0 {
                return Err(WireError::Protocol("TrainResult with zero samples".into()));
            }
            let iterations_per_second = r.f64()?;
            let n = r.u32()? as usize;
            let mut epoch_losses = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                epoch_losses.push(r.f64()?);
            }
            let metrics = ClientMetrics {
                iterations_per_second,
                epoch_losses,
                wall_time_s: r.f64()?,
                steps: r.u64()?,
            };
            Message::TrainResult {
                round,
                weights: get_weights(&mut r)?,
                sample_count,
                metrics,
            }
        }
        5 => Message::EvalResult {
            round: r.u32()?,
            accuracy: r.f64()?,
            loss: r.f64()?,
        },
        6 => Message::Finish { reason: r.str()? },
        t => return Err(WireError::Protocol(format!("unknown message tag {t}"))),
    };
    r.finish()?;
    Ok(msg)
}

/// Serializes one message into a complete frame.
pub fn encode(msg: &Message) -> Vec<u8> {
    let body = payload(msg);
    let mut out = Vec::with_capacity(HEADER_LEN + body.len() + CHECKSUM_LEN);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
    out.push(msg.tag());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Decodes exactly one frame; trailing bytes are a protocol error.
pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
    let (msg, used) = decode_frame(bytes, DEFAULT_MAX_FRAME)?;
    if used != bytes.len() {
        return Err(WireError::Protocol(format!(
            "{} bytes after the frame",
            bytes.len() - used
        )));
    }
    Ok(msg)
}

/// Decodes the frame at the start of `bytes`, returning it with its length.
///
/// A prefix of a valid frame yields [`WireError::Incomplete`].
pub fn decode_frame(bytes: &[u8], max_frame: usize) -> Result<(Message, usize), WireError> {
    let magic_seen = bytes.len().min(MAGIC.len());
    if bytes[..magic_seen] != MAGIC[..magic_seen] {
        return Err(WireError::Protocol(format!(
            "bad magic {:02x?}",
            &bytes[..magic_seen]
        )));
    }
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Incomplete {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != PROTOCOL_VERSION {
        return Err(WireError::Protocol(format!(
            "unsupported protocol version {version} (this side speaks {PROTOCOL_VERSION})"
        )));
    }
    let tag = bytes[6];
    let len = u64::from_le_bytes(bytes[7..15].try_into().expect("8 bytes"));
    let total = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(HEADER_LEN + CHECKSUM_LEN))
        .filter(|&t| t <= max_frame)
        .ok_or_else(|| {
            WireError::Protocol(format!("frame payload of {len} bytes exceeds limit {max_frame}"))
        })?;
    if bytes.len() < total {
        return Err(WireError::Incomplete {
            needed: total,
            available: bytes.len(),
        });
    }
    let body_end = total - CHECKSUM_LEN;
    let expected = u32::from_le_bytes(bytes[body_end..total].try_into().expect("4 bytes"));
    let actual = crc32fast::hash(&bytes[..body_end]);
    if expected != actual {
        return Err(WireError::Corruption { expected, actual });
    }
    Ok((parse_payload(tag, &bytes[HEADER_LEN..body_end])?, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_weights() -> ModelWeights {
        let t = Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, -0.0, f32::MIN_POSITIVE]).unwrap();
        ModelWeights::new(vec![("w".into(), t)]).unwrap()
    }

    #[test]
    fn finish_starts_with_magic() {
        let b = encode(&Message::finish("done"));
        assert_eq!(&b[..4], &[0x46, 0x45, 0x44, 0x57]);
        assert_eq!(decode(&b).unwrap(), Message::finish("done"));
    }

    #[test]
    fn weights_payload_layout() {
        let msg = Message::WeightsDown {
            round: 3,
            weights: small_weights(),
        };
        let b = encode(&msg);
        let body = &b[HEADER_LEN..b.len() - CHECKSUM_LEN];
        // round, count, name len + "w", rank, dims, data
        assert_eq!(body.len(), 4 + 4 + 2 + 1 + 1 + 8 + 24);
        assert_eq!(&body[8..10], &1u16.to_le_bytes());
        assert_eq!(body[11], 2);
        assert_eq!(&body[12..16], &2u32.to_le_bytes());
        assert_eq!(&body[16..20], &3u32.to_le_bytes());
        assert_eq!(&body[20..24], &1.0f32.to_le_bytes());
    }

    #[test]
    fn truncation_is_incomplete() {
        let b = encode(&Message::finish("bye"));
        for cut in 0..b.len() {
            assert!(matches!(
                decode_frame(&b[..cut], DEFAULT_MAX_FRAME),
                Err(WireError::Incomplete { .. })
            ));
        }
    }

    #[test]
    fn wrong_version_names_both() {
        let mut b = encode(&Message::finish("x"));
        b[4..6].copy_from_slice(&999u16.to_le_bytes());
        match decode(&b) {
            Err(WireError::Protocol(m)) => assert!(m.contains("999") && m.contains('1'), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_sample_result_is_rejected() {
        let b = encode(&Message::TrainResult {
            round: 0,
            weights: small_weights(),
            sample_count: 0,
            metrics: ClientMetrics::default(),
        });
        assert!(matches!(decode(&b), Err(WireError::Protocol(_))));
    }
}
