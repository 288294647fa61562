use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest over named entries, independent of insertion order. Each entry
/// contributes its name, length and bytes so boundaries cannot shift.
pub fn sha256_entries<'a>(entries: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> String {
    let mut sorted: Vec<_> = entries.into_iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    let mut h = Sha256::new();
    for (name, bytes) in sorted {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn entry_order_does_not_matter() {
        let a = sha256_entries([("x", &b"1"[..]), ("y", &b"2"[..])]);
        let b = sha256_entries([("y", &b"2"[..]), ("x", &b"1"[..])]);
        assert_eq!(a, b);
        let shifted = sha256_entries([("x", &b"12"[..]), ("y", &b""[..])]);
        assert_ne!(a, shifted);
    }
}
