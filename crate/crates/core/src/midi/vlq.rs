//! SMF variable-length quantities: big-endian base-128 with a continuation
//! bit, at most 4 bytes, so values span `0..2^28`.

/// Largest value a VLQ can carry.
pub const MAX: u32 = (1 << 28) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlqError {
    /// Ran out of input while the continuation bit was still set.
    Truncated,
    /// More than 4 bytes.
    TooLong,
}

/// Encode `value` (must be `<= MAX`) as 1–4 bytes.
pub fn encode(value: u32) -> Vec<u8> {
    assert!(value <= MAX, "VLQ value out of range: {value}");
    let mut out = Vec::with_capacity(4);
    let mut shift = 21;
    let mut started = false;
    while shift > 0 {
        let part = ((value >> shift) & 0x7f) as u8;
        if started || part != 0 {
            out.push(part | 0x80);
            started = true;
        }
        shift -= 7;
    }
    out.push((value & 0x7f) as u8);
    out
}

/// Decode a VLQ from the head of `bytes`, returning the value and how many
/// bytes it used.
pub fn decode(bytes: &[u8]) -> Result<(u32, usize), VlqError> {
    let mut value: u32 = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if i == 4 {
            return Err(VlqError::TooLong);
        }
        value = (value << 7) | (b & 0x7f) as u32;
        if b & 0x80 == 0 {
            return Ok((value, i + 1));
        }
    }
    if bytes.len() >= 4 {
        Err(VlqError::TooLong)
    } else {
        Err(VlqError::Truncated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_byte_example() {
        // 0x81 0x48 = (1 << 7) + 0x48 = 200
        assert_eq!(decode(&[0x81, 0x48]).unwrap(), (200, 2));
        assert_eq!(encode(200), vec![0x81, 0x48]);
    }

    #[test]
    fn boundaries() {
        assert_eq!(encode(0), vec![0x00]);
        assert_eq!(encode(0x7f), vec![0x7f]);
        assert_eq!(encode(0x80), vec![0x81, 0x00]);
        assert_eq!(encode(MAX), vec![0xff, 0xff, 0xff, 0x7f]);
        assert_eq!(decode(&[0xff, 0xff, 0xff, 0x7f]).unwrap(), (MAX, 4));
    }

    #[test]
    fn errors() {
        assert_eq!(decode(&[0x81]), Err(VlqError::Truncated));
        assert_eq!(decode(&[]), Err(VlqError::Truncated));
        assert_eq!(
            decode(&[0x81, 0x81, 0x81, 0x81, 0x01]),
            Err(VlqError::TooLong)
        );
    }

    proptest! {
        #[test]
        fn roundtrip(value in 0u32..=MAX) {
            let bytes = encode(value);
            prop_assert!(bytes.len() <= 4);
            prop_assert_eq!(decode(&bytes).unwrap(), (value, bytes.len()));
        }
    }
}
