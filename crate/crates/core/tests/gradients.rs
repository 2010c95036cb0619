mod common;

use common::TOLERANCE;

fn assert_small(name: &str, err: f64) {
    println!("{name}: max relative error {err:.3e}");
    assert!(err < TOLERANCE, "{name}: {err:.3e} exceeds {TOLERANCE:e}");
}

#[test]
fn order_attention_including_sigma() {
    assert_small("order_attention", common::order_attention_error());
}

#[test]
fn object_attention_with_blocked_rows() {
    assert_small("object_attention", common::object_attention_error());
}

#[test]
fn encoder_block() {
    assert_small("encoder", common::encoder_block_error());
}

#[test]
fn decoder_including_resize() {
    assert_small("decoder", common::decoder_error());
}

#[test]
fn normalized_focal_loss() {
    assert_small("nfl_loss", common::nfl_error());
}

#[test]
fn whole_model_one_round() {
    assert_small("end_to_end", common::end_to_end_error());
}
