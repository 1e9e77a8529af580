//! Two-party session: agree on the reference set, exchange smashed vectors,
//! match locally, exchange matched ids.
//!
//! Message order is fixed: Hello, AgreementCheck, SmashedBatch*, MatchResult,
//! Done. In every exchange party A sends first and B receives first, so a
//! blocking stream transport cannot deadlock.

pub mod transport;
pub mod wire;

use std::fs;
use std::path::Path;
use std::time::Instant;

use thiserror::Error;

use crate::datagen::build_training_data;
use crate::error::{Error, Result, StageExt};
use crate::linkage::split_match;
use crate::model::matches::{pairs_from_csv, pairs_to_csv};
use crate::model::{
    validate_disjointness, AttributeMapping, ExperimentConfig, MatchArray, Party, RecordSet, ReferenceSet,
    SmashedVector,
};
use crate::seed;
use crate::smashing::map_recordset_to_refset;
use crate::svm::{self, SvmModel};

pub use transport::{ChannelTransport, FramedTransport, RecordingTransport, TcpTransport, Transport};
pub use wire::{decode_smashed_batch, encode_smashed_batch, WireError};

pub const PROTOCOL_VERSION: u16 = 1;
pub const DISTANCE_SPEC: &str = "edit+cosine";
/// Records per SmashedBatch message.
pub const BATCH_RECORDS: usize = 256;

const AGREEMENT_MAGIC: &[u8; 4] = b"SLAG";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("agreement mismatch: {0}")]
    AgreementMismatch(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("peer aborted: {0}")]
    PeerAborted(String),
}

impl From<WireError> for ProtocolError {
    fn from(e: WireError) -> Self {
        ProtocolError::ProtocolViolation(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageKind {
    Hello = 1,
    AgreementCheck = 2,
    SmashedBatch = 3,
    MatchResult = 4,
    Done = 5,
    Error = 6,
}

impl MessageKind {
    fn from_u8(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => MessageKind::Hello,
            2 => MessageKind::AgreementCheck,
            3 => MessageKind::SmashedBatch,
            4 => MessageKind::MatchResult,
            5 => MessageKind::Done,
            6 => MessageKind::Error,
            _ => return None,
        })
    }
}

/// Kind tag byte followed by the kind-specific payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn new(kind: MessageKind, payload: Vec<u8>) -> Self {
        Message { kind, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.payload.len());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, ProtocolError> {
        let (&tag, payload) = bytes
            .split_first()
            .ok_or_else(|| ProtocolError::ProtocolViolation("empty message".into()))?;
        let kind = MessageKind::from_u8(tag)
            .ok_or_else(|| ProtocolError::ProtocolViolation(format!("unknown message kind {tag}")))?;
        Ok(Message {
            kind,
            payload: payload.to_vec(),
        })
    }
}

/// What both parties must hold identically before any smashed data moves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolAgreement {
    pub format_version: u16,
    pub reference_set_digest: [u8; 32],
    pub distance_spec: String,
    pub schema: Vec<String>,
    pub mapping: AttributeMapping,
}

impl ProtocolAgreement {
    pub fn new(rs: &ReferenceSet, schema: &[String], mapping: &AttributeMapping) -> Self {
        ProtocolAgreement {
            format_version: PROTOCOL_VERSION,
            reference_set_digest: rs.digest(),
            distance_spec: DISTANCE_SPEC.to_string(),
            schema: schema.to_vec(),
            mapping: mapping.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::new();
        out.extend_from_slice(AGREEMENT_MAGIC);
        out.extend_from_slice(&self.format_version.to_be_bytes());
        out.extend_from_slice(&self.reference_set_digest);
        wire::put_str16(&mut out, &self.distance_spec)?;
        let count = |n: usize| u16::try_from(n).map_err(|_| WireError::LengthOverflow(format!("{n} entries")));
        out.extend_from_slice(&count(self.schema.len())?.to_be_bytes());
        for s in &self.schema {
            wire::put_str16(&mut out, s)?;
        }
        out.extend_from_slice(&count(self.mapping.len())?.to_be_bytes());
        for (a, r) in &self.mapping.pairs {
            wire::put_str16(&mut out, a)?;
            wire::put_str16(&mut out, r)?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = wire::Reader::new(bytes);
        if r.take(4)? != AGREEMENT_MAGIC {
            return Err(WireError::BadMagic);
        }
        let format_version = r.u16()?;
        let reference_set_digest = r.take(32)?.try_into().expect("32 bytes");
        let distance_spec = r.str16()?.to_string();
        let schema = (0..r.u16()?)
            .map(|_| r.str16().map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let pairs = (0..r.u16()?)
            .map(|_| Ok((r.str16()?.to_string(), r.str16()?.to_string())))
            .collect::<Result<Vec<_>, WireError>>()?;
        r.finish()?;
        Ok(ProtocolAgreement {
            format_version,
            reference_set_digest,
            distance_spec,
            schema,
            mapping: AttributeMapping::new(pairs),
        })
    }

    /// First differing field, for error messages.
    fn difference(&self, other: &ProtocolAgreement) -> String {
        if self.format_version != other.format_version {
            format!("format version {} vs {}", self.format_version, other.format_version)
        } else if self.reference_set_digest != other.reference_set_digest {
            "reference set digests differ".to_string()
        } else if self.distance_spec != other.distance_spec {
            format!("distance spec '{}' vs '{}'", self.distance_spec, other.distance_spec)
        } else if self.schema != other.schema {
            format!("schema [{}] vs [{}]", self.schema.join(","), other.schema.join(","))
        } else if self.mapping != other.mapping {
            format!("mapping {} vs {}", self.mapping, other.mapping)
        } else {
            "agreements differ".to_string()
        }
    }
}

fn role_index(role: Party) -> u64 {
    match role {
        Party::A => 0,
        Party::B => 1,
    }
}

/// A party after smashing its records and training its local model.
#[derive(Debug, Clone)]
pub struct PreparedParty {
    pub role: Party,
    pub smashed: Vec<SmashedVector>,
    pub model: SvmModel,
    pub training_examples: usize,
}

/// Smash all of `recs`, build synthetic training data from the first
/// `training_size` of them and train the local model.
pub fn prepare_party(
    role: Party,
    recs: &RecordSet,
    rs: &ReferenceSet,
    cfg: &ExperimentConfig,
) -> Result<PreparedParty> {
    cfg.validate()?;
    if recs.is_empty() {
        return Err(Error::data(format!("party {role} has no records")));
    }
    if !validate_disjointness(rs, recs) {
        return Err(Error::data(format!(
            "reference set shares values with party {role}'s records"
        )));
    }
    let mapping = cfg.resolve_mapping(recs.schema(), rs.schema())?;
    let smashed = map_recordset_to_refset(recs, rs, &mapping).stage("smash")?;

    let train_n = cfg.training_size.min(recs.len());
    if train_n < cfg.training_size {
        log::warn!(
            "party {role}: training on {train_n} records, fewer than the configured {}",
            cfg.training_size
        );
    }
    let train_recs = recs.head(train_n);
    let spec = cfg.corruption_spec(seed::derive(cfg.seed, "training", role_index(role)));
    let examples = build_training_data(&smashed[..train_n], &train_recs, rs, &mapping, &spec).stage("synth")?;
    let model = svm::train(
        &examples,
        &cfg.svm_config(),
        seed::derive(cfg.seed, "svm", role_index(role)),
    )
    .stage("train")?;
    Ok(PreparedParty {
        role,
        smashed,
        model,
        training_examples: examples.len(),
    })
}

impl PreparedParty {
    /// Classify all local x peer pairs with the local model. The result is
    /// always oriented (A ids, B ids). Returns the wall-clock seconds spent
    /// in matching alone.
    pub fn match_peer(&self, peer: &[SmashedVector]) -> Result<(MatchArray, f64)> {
        let start = Instant::now();
        let ma = match self.role {
            Party::A => split_match(&self.smashed, peer, &self.model),
            Party::B => split_match(peer, &self.smashed, &self.model),
        }
        .stage("match")?;
        Ok((ma, start.elapsed().as_secs_f64()))
    }
}

#[derive(Debug, Clone)]
pub struct PartyOutcome {
    pub role: Party,
    pub matches: MatchArray,
    /// Matched (A id, B id) pairs reported by the peer.
    pub peer_matches: Vec<(String, String)>,
    pub match_seconds: f64,
}

struct Session<T> {
    transport: T,
    role: Party,
}

impl<T: Transport> Session<T> {
    fn send(&mut self, kind: MessageKind, payload: Vec<u8>) -> Result<(), ProtocolError> {
        self.transport.send(&Message::new(kind, payload).encode())
    }

    fn expect(&mut self, kind: MessageKind) -> Result<Vec<u8>, ProtocolError> {
        let msg = Message::decode(&self.transport.recv()?)?;
        if msg.kind == kind {
            return Ok(msg.payload);
        }
        if msg.kind == MessageKind::Error {
            return Err(ProtocolError::PeerAborted(
                String::from_utf8_lossy(&msg.payload).into_owned(),
            ));
        }
        Err(ProtocolError::ProtocolViolation(format!(
            "expected {kind:?}, received {:?}",
            msg.kind
        )))
    }

    /// Send ours and receive theirs, A first.
    fn exchange(&mut self, kind: MessageKind, payload: Vec<u8>) -> Result<Vec<u8>, ProtocolError> {
        if self.role == Party::A {
            self.send(kind, payload)?;
            self.expect(kind)
        } else {
            let theirs = self.expect(kind)?;
            self.send(kind, payload)?;
            Ok(theirs)
        }
    }

    fn send_vectors(&mut self, vs: &[SmashedVector]) -> Result<()> {
        for chunk in vs.chunks(BATCH_RECORDS) {
            self.send(MessageKind::SmashedBatch, encode_smashed_batch(chunk)?)?;
        }
        Ok(())
    }

    fn recv_vectors(&mut self, count: usize) -> Result<Vec<SmashedVector>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let batch = decode_smashed_batch(&self.expect(MessageKind::SmashedBatch)?).map_err(ProtocolError::from)?;
            if out.len() + batch.len() > count {
                return Err(ProtocolError::ProtocolViolation(format!(
                    "peer sent more than the announced {count} records"
                ))
                .into());
            }
            out.extend(batch);
        }
        Ok(out)
    }

    fn exchange_vectors(&mut self, ours: &[SmashedVector], peer_count: usize) -> Result<Vec<SmashedVector>> {
        if self.role == Party::A {
            self.send_vectors(ours)?;
            self.recv_vectors(peer_count)
        } else {
            let theirs = self.recv_vectors(peer_count)?;
            self.send_vectors(ours)?;
            Ok(theirs)
        }
    }
}

fn hello_payload(role: Party, records: usize) -> Result<Vec<u8>> {
    let n = u32::try_from(records).map_err(|_| Error::data(format!("{records} records exceed the wire limit")))?;
    let mut out = Vec::with_capacity(7);
    out.extend_from_slice(&PROTOCOL_VERSION.to_be_bytes());
    out.push(role.prefix().as_bytes()[0]);
    out.extend_from_slice(&n.to_be_bytes());
    Ok(out)
}

fn parse_hello(payload: &[u8], expected_role: Party) -> Result<usize, ProtocolError> {
    let mut r = wire::Reader::new(payload);
    let version = r.u16()?;
    if version != PROTOCOL_VERSION {
        return Err(ProtocolError::AgreementMismatch(format!(
            "protocol version {version} vs {PROTOCOL_VERSION}"
        )));
    }
    let role = r.u8()?;
    if role != expected_role.prefix().as_bytes()[0] {
        return Err(ProtocolError::ProtocolViolation(format!(
            "peer announced role '{}', expected {expected_role}",
            role as char
        )));
    }
    let n = r.u32()? as usize;
    r.finish()?;
    Ok(n)
}

fn session<T: Transport>(
    s: &mut Session<T>,
    recs: &RecordSet,
    rs: &ReferenceSet,
    cfg: &ExperimentConfig,
) -> Result<PartyOutcome> {
    let role = s.role;
    let mapping = cfg.resolve_mapping(recs.schema(), rs.schema())?;
    let agreement = ProtocolAgreement::new(rs, recs.schema(), &mapping);

    let hello = s.exchange(MessageKind::Hello, hello_payload(role, recs.len())?)?;
    let peer_count = parse_hello(&hello, role.peer())?;

    let ours = agreement.to_bytes()?;
    let theirs = s.exchange(MessageKind::AgreementCheck, ours.clone())?;
    if theirs != ours {
        let detail = match ProtocolAgreement::from_bytes(&theirs) {
            Ok(peer) => agreement.difference(&peer),
            Err(e) => format!("unreadable peer agreement: {e}"),
        };
        return Err(ProtocolError::AgreementMismatch(detail).into());
    }

    let prepared = prepare_party(role, recs, rs, cfg)?;
    let peer_vectors = s.exchange_vectors(&prepared.smashed, peer_count)?;
    let (matches, match_seconds) = prepared.match_peer(&peer_vectors)?;

    let result = s.exchange(MessageKind::MatchResult, pairs_to_csv(&matches.matched_pairs())?)?;
    let peer_matches =
        pairs_from_csv(&result).map_err(|e| ProtocolError::ProtocolViolation(format!("bad match result: {e}")))?;
    s.exchange(MessageKind::Done, Vec::new())?;
    Ok(PartyOutcome {
        role,
        matches,
        peer_matches,
        match_seconds,
    })
}

/// Run one party's side of the protocol over `transport`.
///
/// On a local failure an Error message is sent to the peer on a best-effort
/// basis before the error is returned.
pub fn run_party<T: Transport>(
    role: Party,
    recs: &RecordSet,
    rs: &ReferenceSet,
    cfg: &ExperimentConfig,
    transport: T,
) -> Result<PartyOutcome> {
    if recs.party != role {
        return Err(Error::config(format!(
            "records belong to party {}, running as {role}",
            recs.party
        )));
    }
    let mut s = Session { transport, role };
    let out = session(&mut s, recs, rs, cfg);
    if let Err(e) = &out {
        let peer_gone = matches!(
            e,
            Error::Protocol(ProtocolError::TransportError(_) | ProtocolError::PeerAborted(_))
        );
        if !peer_gone {
            let _ = s.send(MessageKind::Error, e.to_string().into_bytes());
        }
    }
    out
}

/// Both parties in one process, B on a scoped thread, over channels.
pub fn run_in_process(
    alice: &RecordSet,
    bob: &RecordSet,
    rs: &ReferenceSet,
    cfg: &ExperimentConfig,
) -> Result<(PartyOutcome, PartyOutcome)> {
    let (ta, tb) = ChannelTransport::pair();
    std::thread::scope(|scope| {
        let b = scope.spawn(|| run_party(Party::B, bob, rs, cfg, tb));
        let a = run_party(Party::A, alice, rs, cfg, ta);
        let b = b.join().map_err(|_| Error::data("party B thread panicked"))?;
        Ok((a?, b?))
    })
}

/// Offline exchange: one SmashedBatch frame per file.
pub fn write_smashed_file(path: &Path, vs: &[SmashedVector]) -> Result<()> {
    fs::write(path, encode_smashed_batch(vs)?)?;
    Ok(())
}

pub fn read_smashed_file(path: &Path) -> Result<Vec<SmashedVector>> {
    Ok(decode_smashed_batch(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rs() -> ReferenceSet {
        ReferenceSet::from_rows(&["first", "last"], &[vec!["CHARLIE", "ADLER"], vec!["JAY", "ADLER"]]).unwrap()
    }

    #[test]
    fn agreement_round_trip_and_diff() {
        let schema: Vec<String> = ["first", "middle", "last"].map(String::from).to_vec();
        let mapping = AttributeMapping::default_for(&schema, rs().schema());
        let a = ProtocolAgreement::new(&rs(), &schema, &mapping);
        let bytes = a.to_bytes().unwrap();
        assert_eq!(ProtocolAgreement::from_bytes(&bytes).unwrap(), a);
        let other_rs = ReferenceSet::from_rows(&["first", "last"], &[vec!["CHARLIE", "ADLER"]]).unwrap();
        let b = ProtocolAgreement::new(&other_rs, &schema, &mapping);
        assert_ne!(b.to_bytes().unwrap(), bytes);
        assert!(a.difference(&b).contains("digest"));
    }

    #[test]
    fn message_codec() {
        let m = Message::new(MessageKind::MatchResult, b"x".to_vec());
        assert_eq!(Message::decode(&m.encode()).unwrap(), m);
        assert!(Message::decode(&[]).is_err());
        assert!(Message::decode(&[42]).is_err());
    }

    #[test]
    fn hello_codec() {
        let p = hello_payload(Party::B, 7).unwrap();
        assert_eq!(parse_hello(&p, Party::B).unwrap(), 7);
        assert!(matches!(
            parse_hello(&p, Party::A),
            Err(ProtocolError::ProtocolViolation(_))
        ));
    }

    #[test]
    fn out_of_order_message_aborts() {
        let recs = RecordSet::from_rows(Party::A, &["first", "middle", "last"], &[vec!["ADA", "IVY", "KING"]]).unwrap();
        let (ta, mut tb) = ChannelTransport::pair();
        tb.send(&Message::new(MessageKind::Done, vec![]).encode()).unwrap();
        let err = run_party(Party::A, &recs, &rs(), &ExperimentConfig::default(), ta).unwrap_err();
        assert!(
            matches!(err, Error::Protocol(ProtocolError::ProtocolViolation(_))),
            "{err}"
        );
        assert_eq!(err.exit_code(), 3);
        // A's hello, then its error report
        assert_eq!(Message::decode(&tb.recv().unwrap()).unwrap().kind, MessageKind::Hello);
        assert_eq!(Message::decode(&tb.recv().unwrap()).unwrap().kind, MessageKind::Error);
    }

    #[test]
    fn file_mode_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.slsd");
        let vs = vec![SmashedVector::from_groups("A-000001", &[vec![6, 3], vec![5, 5]]).unwrap()];
        write_smashed_file(&path, &vs).unwrap();
        assert_eq!(read_smashed_file(&path).unwrap(), vs);
    }
}
