//! Hash-derived outputs against vectors computed independently with hashlib.

mod common;

use common::golden;

fn assert_clean((count, bad): (usize, Vec<String>)) {
    assert!(count > 0);
    assert!(bad.is_empty(), "mismatches: {bad:?}");
}

#[test]
fn counter_mode_expansion() {
    assert_clean(golden::check_expand(&golden::load()));
}

#[test]
fn privacy_amplification() {
    assert_clean(golden::check_privacy_amplification(&golden::load()));
}

#[test]
fn pair_keys_both_orders() {
    assert_clean(golden::check_pair_keys(&golden::load()));
}

#[test]
fn tensor_keystreams() {
    assert_clean(golden::check_keystreams(&golden::load()));
}

#[test]
fn masked_uploads_of_zero_parameters() {
    assert_clean(golden::check_masked_update(&golden::load()));
}
