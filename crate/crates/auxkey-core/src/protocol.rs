//! Node state machines and wire messages for the two direct-establishment
//! cases, plus key pre-distribution and runtime node addition.
//!
//! Case 1 (regular ↔ regular) is the four-message handshake: the initiator
//! sends its id and a nonce, the responder binds both parties' ids and nonces
//! under a MAC keyed with its master key, the auxiliary verifies, draws the
//! pairwise key, and returns one protected copy per endpoint; the responder
//! forwards the initiator's copy. Case 2 (regular ↔ auxiliary) is a
//! two-message exchange protected by the requester's master key alone.
//!
//! The auxiliary re-derives master keys from the special key on demand and
//! keeps nothing from a Case-1 transaction afterwards; handling a Case-1
//! request therefore takes `&self`, making the discard property structural.

use crate::crypto::{
    self, CipherText, KeyMaterial, MacTag, NodeId, Nonce, KLEN, TLEN,
};
use rand::RngCore;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("id {0} already issued")]
    DuplicateId(NodeId),
    #[error("node cannot run the handshake with itself")]
    SelfTarget,
    #[error("request MAC did not verify")]
    AuthError,
    #[error("no pending transaction for peer {0}")]
    NoPendingTransaction(NodeId),
    #[error("malformed message: {0}")]
    MalformedMessage(&'static str),
}

/// Case 1, message 1: `u → v: id_u ‖ RN_u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitRequest {
    pub from: NodeId,
    pub rn_u: Nonce,
}

/// Case 1, message 2: `v → AS: (id_u ‖ id_v ‖ RN_u ‖ RN_v) ‖ MAC`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxRequest {
    pub id_u: NodeId,
    pub id_v: NodeId,
    pub rn_u: Nonce,
    pub rn_v: Nonce,
    pub tag: MacTag,
}

/// Case 1, message 3: one protected key copy per endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxReply {
    pub for_u: CipherText,
    pub for_v: CipherText,
}

/// Case 1, message 4: the responder forwards the initiator's copy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardKey {
    pub for_u: CipherText,
}

/// Case 2, message 1: a regular node presents its identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxDirectRequest {
    pub from: NodeId,
}

/// Case 2, message 2: the session key under the requester's master key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxDirectReply {
    pub enc_key: CipherText,
}

/// The MAC in [`AuxRequest`] covers exactly this canonical concatenation.
pub fn mac_input(id_u: NodeId, id_v: NodeId, rn_u: &Nonce, rn_v: &Nonce) -> [u8; 4 * KLEN] {
    let mut out = [0u8; 4 * KLEN];
    out[..KLEN].copy_from_slice(&id_u.canonical_bytes());
    out[KLEN..2 * KLEN].copy_from_slice(&id_v.canonical_bytes());
    out[2 * KLEN..3 * KLEN].copy_from_slice(&rn_u.0);
    out[3 * KLEN..].copy_from_slice(&rn_v.0);
    out
}

/// Primitive invocations performed by a node, for the overhead audit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub macs: u64,
    pub encryptions: u64,
    pub decryptions: u64,
    pub prf_calls: u64,
}

/// Offline setup authority: draws the special key once and provisions nodes.
#[derive(Debug)]
pub struct SetupServer {
    special_key: KeyMaterial,
    issued_regular: BTreeSet<NodeId>,
    issued_aux: BTreeSet<NodeId>,
}

impl SetupServer {
    pub fn new(rng: &mut impl RngCore) -> Self {
        SetupServer {
            special_key: crypto::random_key(rng),
            issued_regular: BTreeSet::new(),
            issued_aux: BTreeSet::new(),
        }
    }

    pub fn special_key(&self) -> &KeyMaterial {
        &self.special_key
    }

    fn claim_id(&mut self, id: NodeId) -> Result<(), ProtocolError> {
        if self.issued_regular.contains(&id) || self.issued_aux.contains(&id) {
            return Err(ProtocolError::DuplicateId(id));
        }
        Ok(())
    }

    /// Load one master key `MK = PRF_SK(id)` into a fresh regular node.
    pub fn provision_regular(&mut self, id: NodeId) -> Result<RegularNodeState, ProtocolError> {
        self.claim_id(id)?;
        self.issued_regular.insert(id);
        let master_key = crypto::prf(&self.special_key, &id.canonical_bytes());
        Ok(RegularNodeState {
            id,
            master_key,
            pairwise_keys: BTreeMap::new(),
            pending: BTreeMap::new(),
            ops: OpCounts::default(),
        })
    }

    /// Load the special key into a fresh auxiliary node.
    pub fn provision_auxiliary(&mut self, id: NodeId) -> Result<AuxiliaryNodeState, ProtocolError> {
        self.claim_id(id)?;
        self.issued_aux.insert(id);
        Ok(AuxiliaryNodeState {
            id,
            special_key: self.special_key,
            session_keys: BTreeMap::new(),
        })
    }

    /// Runtime addition of a regular node; provisioning is identical to the
    /// pre-deployment path, so the new node can establish keys immediately.
    pub fn add_regular_node(&mut self, id: NodeId) -> Result<RegularNodeState, ProtocolError> {
        self.provision_regular(id)
    }

    /// Runtime addition of an auxiliary; carries the original special key.
    pub fn add_auxiliary_node(&mut self, id: NodeId) -> Result<AuxiliaryNodeState, ProtocolError> {
        self.provision_auxiliary(id)
    }
}

/// A deployed regular node: one preloaded master key plus whatever pairwise
/// keys it has established. `pending` holds this node's own nonce for each
/// handshake still in flight (the initiator keeps RN_u, the responder RN_v).
#[derive(Debug, Clone)]
pub struct RegularNodeState {
    id: NodeId,
    master_key: KeyMaterial,
    pairwise_keys: BTreeMap<NodeId, KeyMaterial>,
    pending: BTreeMap<NodeId, Nonce>,
    ops: OpCounts,
}

impl RegularNodeState {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn pairwise_key(&self, peer: NodeId) -> Option<&KeyMaterial> {
        self.pairwise_keys.get(&peer)
    }

    pub fn pairwise_keys(&self) -> &BTreeMap<NodeId, KeyMaterial> {
        &self.pairwise_keys
    }

    pub fn master_key(&self) -> &KeyMaterial {
        &self.master_key
    }

    /// Number of secrets loaded before deployment. Always 1: the master key.
    pub fn preloaded_secret_count(&self) -> usize {
        1
    }

    pub fn op_counts(&self) -> OpCounts {
        self.ops
    }

    /// Case 1, initiator side: draw RN_u, remember it, emit message 1.
    /// Re-initiation to the same peer overwrites the pending nonce
    /// (latest-wins); an existing pairwise key is replaced only when the new
    /// handshake completes.
    pub fn initiate(
        &mut self,
        v_id: NodeId,
        rng: &mut impl RngCore,
    ) -> Result<InitRequest, ProtocolError> {
        if v_id == self.id {
            return Err(ProtocolError::SelfTarget);
        }
        let rn_u = crypto::random_nonce(rng);
        self.pending.insert(v_id, rn_u);
        Ok(InitRequest { from: self.id, rn_u })
    }

    /// Case 1, responder side: draw RN_v, bind both ids and nonces under a
    /// MAC keyed with this node's master key, emit message 2.
    pub fn handle_init(
        &mut self,
        msg: &InitRequest,
        rng: &mut impl RngCore,
    ) -> Result<AuxRequest, ProtocolError> {
        if msg.from == self.id {
            return Err(ProtocolError::SelfTarget);
        }
        let rn_v = crypto::random_nonce(rng);
        self.pending.insert(msg.from, rn_v);
        let input = mac_input(msg.from, self.id, &msg.rn_u, &rn_v);
        self.ops.macs += 1;
        let tag = crypto::mac(&self.master_key, &input);
        Ok(AuxRequest {
            id_u: msg.from,
            id_v: self.id,
            rn_u: msg.rn_u,
            rn_v,
            tag,
        })
    }

    /// Case 1, responder side: recover the pairwise key from the auxiliary's
    /// reply, store it, and forward the initiator's protected copy.
    pub fn responder_handle_reply(
        &mut self,
        msg: &AuxReply,
        peer: NodeId,
    ) -> Result<ForwardKey, ProtocolError> {
        let rn_v = self
            .pending
            .remove(&peer)
            .ok_or(ProtocolError::NoPendingTransaction(peer))?;
        self.ops.decryptions += 1;
        let pt = crypto::decrypt(&self.master_key, &msg.for_v);
        let masked = KeyMaterial::from_bytes(
            pt.try_into()
                .map_err(|_| ProtocolError::MalformedMessage("key copy is not KLEN octets"))?,
        );
        let k = crypto::unmask_key(&masked, self.id, &rn_v);
        self.pairwise_keys.insert(peer, k);
        Ok(ForwardKey {
            for_u: msg.for_u.clone(),
        })
    }

    /// Case 1, initiator side: recover and store the pairwise key.
    pub fn initiator_handle_forward(
        &mut self,
        msg: &ForwardKey,
        peer: NodeId,
    ) -> Result<KeyMaterial, ProtocolError> {
        let rn_u = self
            .pending
            .remove(&peer)
            .ok_or(ProtocolError::NoPendingTransaction(peer))?;
        self.ops.decryptions += 1;
        let pt = crypto::decrypt(&self.master_key, &msg.for_u);
        let masked = KeyMaterial::from_bytes(
            pt.try_into()
                .map_err(|_| ProtocolError::MalformedMessage("key copy is not KLEN octets"))?,
        );
        let k = crypto::unmask_key(&masked, self.id, &rn_u);
        self.pairwise_keys.insert(peer, k);
        Ok(k)
    }

    /// Case 2, message 1: just this node's identifier (no nonce — implemented
    /// as the scheme defines it; the replay exposure is documented, not fixed).
    pub fn aux_request(&self) -> AuxDirectRequest {
        AuxDirectRequest { from: self.id }
    }

    /// Case 2, requester side: decrypt the session key and store it under the
    /// auxiliary's id.
    pub fn accept_direct(
        &mut self,
        msg: &AuxDirectReply,
        aux_id: NodeId,
    ) -> Result<KeyMaterial, ProtocolError> {
        self.ops.decryptions += 1;
        let pt = crypto::decrypt(&self.master_key, &msg.enc_key);
        let k = KeyMaterial::from_bytes(
            pt.try_into()
                .map_err(|_| ProtocolError::MalformedMessage("session key is not KLEN octets"))?,
        );
        self.pairwise_keys.insert(aux_id, k);
        Ok(k)
    }
}

/// A deployed auxiliary node: the special key, plus the Case-2 session keys
/// both sides keep for later secure traffic. Master keys derived during
/// Case-1 service are used and dropped inside [`Self::handle_request`].
#[derive(Debug, Clone)]
pub struct AuxiliaryNodeState {
    id: NodeId,
    special_key: KeyMaterial,
    session_keys: BTreeMap<NodeId, KeyMaterial>,
}

impl AuxiliaryNodeState {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn session_keys(&self) -> &BTreeMap<NodeId, KeyMaterial> {
        &self.session_keys
    }

    /// Number of secrets loaded before deployment. Always 1: the special key.
    pub fn preloaded_secret_count(&self) -> usize {
        1
    }

    /// Digest of the complete auxiliary state, for the statelessness checks:
    /// Case-1 service must leave this unchanged.
    pub fn state_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.id.canonical_bytes());
        h.update(self.special_key.as_bytes());
        for (peer, key) in &self.session_keys {
            h.update(peer.canonical_bytes());
            h.update(key.as_bytes());
        }
        h.finalize().into()
    }

    /// Case 1, auxiliary side: verify the responder's MAC under the recomputed
    /// master key, draw the pairwise key, and protect one copy per endpoint.
    /// Takes `&self`: every derived value (MK_u, MK_v, k_uv) dies with the
    /// stack frame, which is the "discards the computed master keys" property.
    pub fn handle_request(
        &self,
        msg: &AuxRequest,
        rng: &mut impl RngCore,
    ) -> Result<AuxReply, ProtocolError> {
        let mk_v = crypto::prf(&self.special_key, &msg.id_v.canonical_bytes());
        let input = mac_input(msg.id_u, msg.id_v, &msg.rn_u, &msg.rn_v);
        if !crypto::mac_verify(&msg.tag, &mk_v, &input) {
            return Err(ProtocolError::AuthError);
        }
        let mk_u = crypto::prf(&self.special_key, &msg.id_u.canonical_bytes());
        let k_uv = crypto::random_key(rng);
        let for_u = crypto::encrypt(
            &mk_u,
            crypto::mask_key(&k_uv, msg.id_u, &msg.rn_u).as_bytes(),
        );
        let for_v = crypto::encrypt(
            &mk_v,
            crypto::mask_key(&k_uv, msg.id_v, &msg.rn_v).as_bytes(),
        );
        Ok(AuxReply { for_u, for_v })
    }

    /// Case 2, auxiliary side: derive the requester's master key, draw a
    /// session key, record it for future secure traffic, reply with the key
    /// under the requester's master key. MK_u itself is not retained.
    pub fn handle_direct(
        &mut self,
        msg: &AuxDirectRequest,
        rng: &mut impl RngCore,
    ) -> AuxDirectReply {
        let mk_u = crypto::prf(&self.special_key, &msg.from.canonical_bytes());
        let k = crypto::random_key(rng);
        self.session_keys.insert(msg.from, k);
        AuxDirectReply {
            enc_key: crypto::encrypt(&mk_u, k.as_bytes()),
        }
    }
}

/// Complete Case-2 exchange between a regular node and an in-range auxiliary.
/// Returns the agreed session key (also stored on both sides).
pub fn aux_direct(
    u: &mut RegularNodeState,
    aux: &mut AuxiliaryNodeState,
    rng: &mut impl RngCore,
) -> Result<KeyMaterial, ProtocolError> {
    let req = u.aux_request();
    let reply = aux.handle_direct(&req, rng);
    u.accept_direct(&reply, aux.id())
}

// --- wire encoding ---------------------------------------------------------
//
// 1-octet variant tag (1..=6 in declaration order), then fields in
// declaration order: NodeId and Nonce as KLEN octets, MacTag as TLEN octets,
// CipherText with a 2-octet big-endian length prefix. Used for transcript
// dumps and the determinism checks.

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("buffer too short at offset {0}")]
    ShortBuffer(usize),
    #[error("unknown message tag {0}")]
    UnknownTag(u8),
    #[error("{0} trailing octets after message")]
    TrailingBytes(usize),
}

/// Tagged union of the six wire messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    InitRequest(InitRequest),
    AuxRequest(AuxRequest),
    AuxReply(AuxReply),
    ForwardKey(ForwardKey),
    AuxDirectRequest(AuxDirectRequest),
    AuxDirectReply(AuxDirectReply),
}

fn put_ct(out: &mut Vec<u8>, ct: &CipherText) {
    debug_assert!(ct.0.len() <= u16::MAX as usize);
    out.extend_from_slice(&(ct.0.len() as u16).to_be_bytes());
    out.extend_from_slice(&ct.0);
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.at + n > self.buf.len() {
            return Err(WireError::ShortBuffer(self.at));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn node_id(&mut self) -> Result<NodeId, WireError> {
        let b: [u8; KLEN] = self.take(KLEN)?.try_into().unwrap();
        Ok(NodeId::from_canonical_bytes(&b))
    }

    fn nonce(&mut self) -> Result<Nonce, WireError> {
        Ok(Nonce(self.take(KLEN)?.try_into().unwrap()))
    }

    fn tag(&mut self) -> Result<MacTag, WireError> {
        Ok(MacTag(self.take(TLEN)?.try_into().unwrap()))
    }

    fn ct(&mut self) -> Result<CipherText, WireError> {
        let len = u16::from_be_bytes(self.take(2)?.try_into().unwrap()) as usize;
        Ok(CipherText(self.take(len)?.to_vec()))
    }
}

impl ProtocolMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            ProtocolMessage::InitRequest(m) => {
                out.push(1);
                out.extend_from_slice(&m.from.canonical_bytes());
                out.extend_from_slice(&m.rn_u.0);
            }
            ProtocolMessage::AuxRequest(m) => {
                out.push(2);
                out.extend_from_slice(&m.id_u.canonical_bytes());
                out.extend_from_slice(&m.id_v.canonical_bytes());
                out.extend_from_slice(&m.rn_u.0);
                out.extend_from_slice(&m.rn_v.0);
                out.extend_from_slice(&m.tag.0);
            }
            ProtocolMessage::AuxReply(m) => {
                out.push(3);
                put_ct(&mut out, &m.for_u);
                put_ct(&mut out, &m.for_v);
            }
            ProtocolMessage::ForwardKey(m) => {
                out.push(4);
                put_ct(&mut out, &m.for_u);
            }
            ProtocolMessage::AuxDirectRequest(m) => {
                out.push(5);
                out.extend_from_slice(&m.from.canonical_bytes());
            }
            ProtocolMessage::AuxDirectReply(m) => {
                out.push(6);
                put_ct(&mut out, &m.enc_key);
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut c = Cursor { buf, at: 0 };
        let tag = c.take(1)?[0];
        let msg = match tag {
            1 => ProtocolMessage::InitRequest(InitRequest {
                from: c.node_id()?,
                rn_u: c.nonce()?,
            }),
            2 => ProtocolMessage::AuxRequest(AuxRequest {
                id_u: c.node_id()?,
                id_v: c.node_id()?,
                rn_u: c.nonce()?,
                rn_v: c.nonce()?,
                tag: c.tag()?,
            }),
            3 => ProtocolMessage::AuxReply(AuxReply {
                for_u: c.ct()?,
                for_v: c.ct()?,
            }),
            4 => ProtocolMessage::ForwardKey(ForwardKey { for_u: c.ct()? }),
            5 => ProtocolMessage::AuxDirectRequest(AuxDirectRequest { from: c.node_id()? }),
            6 => ProtocolMessage::AuxDirectReply(AuxDirectReply { enc_key: c.ct()? }),
            other => return Err(WireError::UnknownTag(other)),
        };
        if c.at != buf.len() {
            return Err(WireError::TrailingBytes(buf.len() - c.at));
        }
        Ok(msg)
    }
}
