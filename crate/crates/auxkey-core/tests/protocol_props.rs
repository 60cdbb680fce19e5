//! Property tests for the establishment protocol: key agreement from both
//! delivered copies, MAC soundness under arbitrary tampering, auxiliary
//! statelessness across arbitrary service sequences, and wire-codec
//! round-trips over arbitrary field contents.

use auxkey_core::crypto::{
    decrypt, mac, prf, seeded_rng, unmask_key, CipherText, KeyMaterial, MacTag, NodeId, Nonce,
};
use auxkey_core::protocol::{
    aux_direct, mac_input, AuxiliaryNodeState, ProtocolError, ProtocolMessage, RegularNodeState,
    SetupServer, WireError,
};
use proptest::prelude::*;

/// Provision two regulars and one auxiliary from one seed.
fn provision(
    seed: u64,
    id_u: u64,
    id_v: u64,
    id_a: u64,
) -> (
    SetupServer,
    RegularNodeState,
    RegularNodeState,
    AuxiliaryNodeState,
) {
    let mut rng = seeded_rng(seed, 0);
    let mut server = SetupServer::new(&mut rng);
    let u = server.provision_regular(NodeId(id_u)).unwrap();
    let v = server.provision_regular(NodeId(id_v)).unwrap();
    let a = server.provision_auxiliary(NodeId(id_a)).unwrap();
    (server, u, v, a)
}

fn distinct_ids() -> impl Strategy<Value = (u64, u64, u64)> {
    (any::<u64>(), any::<u64>(), any::<u64>())
        .prop_filter("ids must be distinct", |(a, b, c)| {
            a != b && b != c && a != c
        })
}

proptest! {
    /// Complete Case-1 run: both parties end with the same key, and that key
    /// equals what the auxiliary encrypted for each of them — recovered here
    /// out-of-band by re-deriving both master keys from the special key.
    #[test]
    fn case1_ends_in_agreement((id_u, id_v, id_a) in distinct_ids(), seed in any::<u64>()) {
        let (server, mut u, mut v, a) = provision(seed, id_u, id_v, id_a);
        let mut rng_u = seeded_rng(seed, 1);
        let mut rng_v = seeded_rng(seed, 2);
        let mut rng_a = seeded_rng(seed, 3);

        let m1 = u.initiate(v.id(), &mut rng_u).unwrap();
        let m2 = v.handle_init(&m1, &mut rng_v).unwrap();
        let reply = a.handle_request(&m2, &mut rng_a).unwrap();
        let m4 = v.responder_handle_reply(&reply, u.id()).unwrap();
        let k_u = u.initiator_handle_forward(&m4, v.id()).unwrap();

        prop_assert_eq!(u.pairwise_key(v.id()), Some(&k_u));
        prop_assert_eq!(v.pairwise_key(u.id()), Some(&k_u));

        // out-of-band check against the copies on the wire
        let mk_u = prf(server.special_key(), &u.id().canonical_bytes());
        let mk_v = prf(server.special_key(), &v.id().canonical_bytes());
        let masked_u = KeyMaterial::from_bytes(decrypt(&mk_u, &reply.for_u).try_into().unwrap());
        let masked_v = KeyMaterial::from_bytes(decrypt(&mk_v, &reply.for_v).try_into().unwrap());
        prop_assert_eq!(unmask_key(&masked_u, u.id(), &m1.rn_u), k_u);
        prop_assert_eq!(unmask_key(&masked_v, v.id(), &m2.rn_v), k_u);
    }

    /// Any single bit flipped anywhere in the authenticated request makes the
    /// auxiliary reject it.
    #[test]
    fn tampered_requests_are_rejected(
        (id_u, id_v, id_a) in distinct_ids(),
        seed in any::<u64>(),
        byte in 0usize..80,
        bit in 0u8..8,
    ) {
        let (_server, mut u, mut v, a) = provision(seed, id_u, id_v, id_a);
        let m1 = u.initiate(v.id(), &mut seeded_rng(seed, 1)).unwrap();
        let m2 = v.handle_init(&m1, &mut seeded_rng(seed, 2)).unwrap();

        // flip one bit in the canonical byte layout, then rebuild the message
        let mut bytes = [0u8; 80];
        bytes[..16].copy_from_slice(&m2.id_u.canonical_bytes());
        bytes[16..32].copy_from_slice(&m2.id_v.canonical_bytes());
        bytes[32..48].copy_from_slice(&m2.rn_u.0);
        bytes[48..64].copy_from_slice(&m2.rn_v.0);
        bytes[64..80].copy_from_slice(&m2.tag.0);
        bytes[byte] ^= 1 << bit;
        let forged = auxkey_core::protocol::AuxRequest {
            id_u: NodeId::from_canonical_bytes(&bytes[..16].try_into().unwrap()),
            id_v: NodeId::from_canonical_bytes(&bytes[16..32].try_into().unwrap()),
            rn_u: Nonce(bytes[32..48].try_into().unwrap()),
            rn_v: Nonce(bytes[48..64].try_into().unwrap()),
            tag: MacTag(bytes[64..80].try_into().unwrap()),
        };

        // flips in the high zero-padding of an id do not change the decoded
        // id and thus leave the message intact; every other flip must fail
        let unchanged = forged.id_u == m2.id_u
            && forged.id_v == m2.id_v
            && forged.rn_u == m2.rn_u
            && forged.rn_v == m2.rn_v
            && forged.tag == m2.tag;
        let outcome = a.handle_request(&forged, &mut seeded_rng(seed, 3));
        if unchanged {
            prop_assert!(outcome.is_ok());
        } else {
            prop_assert_eq!(outcome.unwrap_err(), ProtocolError::AuthError);
        }
    }

    /// A MAC produced under the wrong master key never authenticates, even
    /// when everything else is honest.
    #[test]
    fn wrong_key_macs_are_rejected(
        (id_u, id_v, id_a) in distinct_ids(),
        seed in any::<u64>(),
        wrong_key in any::<[u8; 16]>(),
    ) {
        let (server, mut u, mut v, a) = provision(seed, id_u, id_v, id_a);
        let mk_v = prf(server.special_key(), &v.id().canonical_bytes());
        prop_assume!(wrong_key != *mk_v.as_bytes());

        let m1 = u.initiate(v.id(), &mut seeded_rng(seed, 1)).unwrap();
        let mut m2 = v.handle_init(&m1, &mut seeded_rng(seed, 2)).unwrap();
        let input = mac_input(m2.id_u, m2.id_v, &m2.rn_u, &m2.rn_v);
        m2.tag = mac(&KeyMaterial::from_bytes(wrong_key), &input);

        let outcome = a.handle_request(&m2, &mut seeded_rng(seed, 3));
        prop_assert_eq!(outcome.unwrap_err(), ProtocolError::AuthError);
    }

    /// Serving any sequence of Case-1 handshakes leaves the auxiliary's
    /// persistent state byte-identical: derived master keys and generated
    /// session keys never stick.
    #[test]
    fn auxiliary_keeps_no_case1_state(seed in any::<u64>(), rounds in 1usize..20) {
        let mut rng = seeded_rng(seed, 0);
        let mut server = SetupServer::new(&mut rng);
        let a = server.provision_auxiliary(NodeId(1_000_000)).unwrap();
        let mut nodes: Vec<RegularNodeState> = (0..6)
            .map(|i| server.provision_regular(NodeId(i)).unwrap())
            .collect();

        let digest_before = a.state_digest();
        let mut rng_n = seeded_rng(seed, 4);
        let mut rng_a = seeded_rng(seed, 5);
        for r in 0..rounds {
            let (ui, vi) = (r % 6, (r + 1 + r % 5) % 6);
            if ui == vi {
                continue;
            }
            let (lo, hi) = (ui.min(vi), ui.max(vi));
            let (left, right) = nodes.split_at_mut(hi);
            let (u, v) = (&mut left[lo], &mut right[0]);
            let m1 = u.initiate(v.id(), &mut rng_n).unwrap();
            let m2 = v.handle_init(&m1, &mut rng_n).unwrap();
            let reply = a.handle_request(&m2, &mut rng_a).unwrap();
            let m4 = v.responder_handle_reply(&reply, u.id()).unwrap();
            u.initiator_handle_forward(&m4, v.id()).unwrap();
        }
        prop_assert_eq!(a.state_digest(), digest_before);
    }

    /// Case 2 does change the auxiliary (it keeps the session key), and both
    /// sides agree on it.
    #[test]
    fn case2_agreement_and_recorded_session(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed, 0);
        let mut server = SetupServer::new(&mut rng);
        let mut u = server.provision_regular(NodeId(7)).unwrap();
        let mut a = server.provision_auxiliary(NodeId(8)).unwrap();
        let before = a.state_digest();
        let k = aux_direct(&mut u, &mut a, &mut seeded_rng(seed, 6)).unwrap();
        prop_assert_eq!(u.pairwise_key(a.id()), Some(&k));
        prop_assert_eq!(a.session_keys().get(&u.id()), Some(&k));
        prop_assert_ne!(a.state_digest(), before);
    }

    /// decode ∘ encode is the identity for arbitrary well-typed messages.
    #[test]
    fn wire_codec_round_trips(
        tag_choice in 0u8..6,
        ids in any::<(u64, u64)>(),
        blobs in any::<([u8; 16], [u8; 16], [u8; 16])>(),
        ct_a in proptest::collection::vec(any::<u8>(), 0..100),
        ct_b in proptest::collection::vec(any::<u8>(), 0..100),
    ) {
        use auxkey_core::protocol::*;
        let msg = match tag_choice {
            0 => ProtocolMessage::InitRequest(InitRequest {
                from: NodeId(ids.0),
                rn_u: Nonce(blobs.0),
            }),
            1 => ProtocolMessage::AuxRequest(AuxRequest {
                id_u: NodeId(ids.0),
                id_v: NodeId(ids.1),
                rn_u: Nonce(blobs.0),
                rn_v: Nonce(blobs.1),
                tag: MacTag(blobs.2),
            }),
            2 => ProtocolMessage::AuxReply(AuxReply {
                for_u: CipherText(ct_a.clone()),
                for_v: CipherText(ct_b.clone()),
            }),
            3 => ProtocolMessage::ForwardKey(ForwardKey {
                for_u: CipherText(ct_a.clone()),
            }),
            4 => ProtocolMessage::AuxDirectRequest(AuxDirectRequest { from: NodeId(ids.0) }),
            _ => ProtocolMessage::AuxDirectReply(AuxDirectReply {
                enc_key: CipherText(ct_a.clone()),
            }),
        };
        let encoded = msg.encode();
        prop_assert_eq!(ProtocolMessage::decode(&encoded).unwrap(), msg);
    }

    /// Truncations fail with ShortBuffer and appended garbage fails with
    /// TrailingBytes; neither panics.
    #[test]
    fn wire_codec_rejects_damage(seed in any::<u64>(), cut in 1usize..33, pad in 1usize..5) {
        let (_s, mut u, mut v, _a) = provision(seed, 1, 2, 3);
        let m1 = u.initiate(v.id(), &mut seeded_rng(seed, 1)).unwrap();
        let m2 = v.handle_init(&m1, &mut seeded_rng(seed, 2)).unwrap();
        for encoded in [
            ProtocolMessage::InitRequest(m1).encode(),
            ProtocolMessage::AuxRequest(m2).encode(),
        ] {
            let cut = cut.min(encoded.len());
            let truncated = &encoded[..encoded.len() - cut];
            prop_assert!(matches!(
                ProtocolMessage::decode(truncated),
                Err(WireError::ShortBuffer(_))
            ));
            let mut padded = encoded.clone();
            padded.extend(std::iter::repeat_n(0xAA, pad));
            prop_assert!(matches!(
                ProtocolMessage::decode(&padded),
                Err(WireError::TrailingBytes(_))
            ));
        }
        prop_assert!(matches!(
            ProtocolMessage::decode(&[]),
            Err(WireError::ShortBuffer(_))
        ));
        prop_assert!(matches!(
            ProtocolMessage::decode(&[9, 0, 0]),
            Err(WireError::UnknownTag(9))
        ));
    }
}
