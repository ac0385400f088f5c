//! Opaque identifiers.
//!
//! Identifiers are ULID-shaped: ten Crockford base32 characters of
//! millisecond time followed by sixteen characters of sequence. Ids minted
//! by the service take their sequence from the event-log offset of the
//! event that introduces them, so replaying the log never has to restore an
//! id generator.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;

const CROCKFORD: &[u8; 32] = b"0123456789ABCDEFGHJKMNPQRSTVWXYZ";

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// A participant: seeker or expert.
    UserId
);
string_id!(QueryId);
string_id!(AnswerId);
string_id!(TaskId);
string_id!(ChunkId);
string_id!(
    /// Channel message id, either assigned by the channel (inbound) or
    /// minted by the service (outbound).
    MessageId
);

fn encode(mut value: u128, width: usize, out: &mut String) {
    let mut buf = vec![b'0'; width];
    for slot in buf.iter_mut().rev() {
        *slot = CROCKFORD[(value & 31) as usize];
        value >>= 5;
    }
    out.push_str(std::str::from_utf8(&buf).expect("crockford alphabet is ascii"));
}

/// Mint a time-sortable id with a kind prefix.
///
/// `offset` is the log offset of the introducing event and `slot`
/// distinguishes several ids introduced by the same event.
pub fn mint(prefix: &str, at: Timestamp, offset: u64, slot: u8) -> String {
    let millis = at.timestamp_millis().max(0) as u128 & ((1u128 << 48) - 1);
    let seq = ((offset as u128) << 8) | slot as u128;
    let mut s = String::with_capacity(prefix.len() + 27);
    s.push_str(prefix);
    s.push('_');
    encode(millis, 10, &mut s);
    encode(seq, 16, &mut s);
    s
}
