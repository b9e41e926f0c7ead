//! Hash tokenizer: lowercase, split on Unicode whitespace, FNV-1a each token.

/// Reserved id of the leading aggregate token.
pub const CLS_ID: usize = 0;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Token ids for `text`: `[CLS, t1, t2, ...]`, at most `max_len` ids in total.
/// Content ids fall in `1..vocab_size`.
pub fn tokenize(text: &str, vocab_size: usize, max_len: usize) -> Vec<usize> {
    assert!(vocab_size >= 2, "vocab_size must be at least 2");
    assert!(max_len >= 1, "max_len must be at least 1");
    let lowered = text.to_lowercase();
    let buckets = (vocab_size - 1) as u64;
    std::iter::once(CLS_ID)
        .chain(
            lowered
                .split_whitespace()
                .map(|tok| (fnv1a64(tok.as_bytes()) % buckets) as usize + 1),
        )
        .take(max_len)
        .collect()
}

/// Number of content tokens in `text`, CLS excluded and no length cap.
pub fn count_tokens(text: &str) -> usize {
    text.to_lowercase().split_whitespace().count()
}
