//! Graph builders for the four supported backbones, truncated at their
//! final activation (no classifier top). Node names mirror the upstream
//! Keras layer names where those are stable, so converting published
//! pretrained weights into the artifact format is a mechanical rename.

use tumorbench_nn::layers::{PadSpec, Padding};
use tumorbench_nn::{Graph, NodeId};

/// Input side length all backbones are built for.
pub const INPUT_SIDE: usize = 256;

const BN_EPS_RESNET: f32 = 1.001e-5;
const BN_EPS_DEFAULT: f32 = 1e-3;
const BN_MOMENTUM: f32 = 0.99;

// ---------------------------------------------------------------- ResNet50V2

fn resnet_block(g: &mut Graph, x: NodeId, filters: usize, stride: usize, conv_shortcut: bool, name: &str) -> NodeId {
    let preact = g.batch_norm(&format!("{name}_preact_bn"), x, BN_MOMENTUM, BN_EPS_RESNET);
    let preact = g.relu(&format!("{name}_preact_relu"), preact);
    let shortcut = if conv_shortcut {
        g.conv2d(&format!("{name}_0_conv"), preact, 4 * filters, (1, 1), (stride, stride), Padding::Valid, true)
    } else if stride > 1 {
        g.max_pool(&format!("{name}_0_pool"), x, (1, 1), (stride, stride), Padding::Valid)
    } else {
        x
    };
    let y = g.conv2d(&format!("{name}_1_conv"), preact, filters, (1, 1), (1, 1), Padding::Valid, false);
    let y = g.batch_norm(&format!("{name}_1_bn"), y, BN_MOMENTUM, BN_EPS_RESNET);
    let y = g.relu(&format!("{name}_1_relu"), y);
    let y = g.zero_pad(&format!("{name}_2_pad"), y, PadSpec::symmetric(1));
    let y = g.conv2d(&format!("{name}_2_conv"), y, filters, (3, 3), (stride, stride), Padding::Valid, false);
    let y = g.batch_norm(&format!("{name}_2_bn"), y, BN_MOMENTUM, BN_EPS_RESNET);
    let y = g.relu(&format!("{name}_2_relu"), y);
    let y = g.conv2d(&format!("{name}_3_conv"), y, 4 * filters, (1, 1), (1, 1), Padding::Valid, true);
    g.add(&format!("{name}_out"), shortcut, y, 1.0)
}

fn resnet_stack(g: &mut Graph, mut x: NodeId, filters: usize, blocks: usize, stride1: usize, name: &str) -> NodeId {
    x = resnet_block(g, x, filters, 1, true, &format!("{name}_block1"));
    for i in 2..blocks {
        x = resnet_block(g, x, filters, 1, false, &format!("{name}_block{i}"));
    }
    resnet_block(g, x, filters, stride1, false, &format!("{name}_block{blocks}"))
}

/// Pre-activation ResNet-50 v2; final feature map (8, 8, 2048) at 256 input.
pub fn resnet50v2(seed: u64) -> Graph {
    let mut g = Graph::new((INPUT_SIDE, INPUT_SIDE, 3), seed);
    let x = g.input();
    let x = g.zero_pad("conv1_pad", x, PadSpec::symmetric(3));
    let x = g.conv2d("conv1_conv", x, 64, (7, 7), (2, 2), Padding::Valid, true);
    let x = g.zero_pad("pool1_pad", x, PadSpec::symmetric(1));
    let x = g.max_pool("pool1_pool", x, (3, 3), (2, 2), Padding::Valid);
    let x = resnet_stack(&mut g, x, 64, 3, 2, "conv2");
    let x = resnet_stack(&mut g, x, 128, 4, 2, "conv3");
    let x = resnet_stack(&mut g, x, 256, 6, 2, "conv4");
    let x = resnet_stack(&mut g, x, 512, 3, 1, "conv5");
    let x = g.batch_norm("post_bn", x, BN_MOMENTUM, BN_EPS_RESNET);
    let x = g.relu("post_relu", x);
    g.set_output(x);
    g
}

// --------------------------------------------------------------- DenseNet201

fn dense_conv_block(g: &mut Graph, x: NodeId, growth: usize, name: &str) -> NodeId {
    let y = g.batch_norm(&format!("{name}_0_bn"), x, BN_MOMENTUM, BN_EPS_RESNET);
    let y = g.relu(&format!("{name}_0_relu"), y);
    let y = g.conv2d(&format!("{name}_1_conv"), y, 4 * growth, (1, 1), (1, 1), Padding::Valid, false);
    let y = g.batch_norm(&format!("{name}_1_bn"), y, BN_MOMENTUM, BN_EPS_RESNET);
    let y = g.relu(&format!("{name}_1_relu"), y);
    let y = g.conv2d(&format!("{name}_2_conv"), y, growth, (3, 3), (1, 1), Padding::Same, false);
    g.concat(&format!("{name}_concat"), &[x, y])
}

fn dense_block(g: &mut Graph, mut x: NodeId, blocks: usize, name: &str) -> NodeId {
    for i in 1..=blocks {
        x = dense_conv_block(g, x, 32, &format!("{name}_block{i}"));
    }
    x
}

fn dense_transition(g: &mut Graph, x: NodeId, name: &str) -> NodeId {
    let c = g.node_shape(x).channels();
    let y = g.batch_norm(&format!("{name}_bn"), x, BN_MOMENTUM, BN_EPS_RESNET);
    let y = g.relu(&format!("{name}_relu"), y);
    let y = g.conv2d(&format!("{name}_conv"), y, c / 2, (1, 1), (1, 1), Padding::Valid, false);
    g.avg_pool(&format!("{name}_pool"), y, (2, 2), (2, 2), Padding::Valid)
}

/// DenseNet-201 (growth 32, blocks 6/12/48/32); final map (8, 8, 1920).
pub fn densenet201(seed: u64) -> Graph {
    let mut g = Graph::new((INPUT_SIDE, INPUT_SIDE, 3), seed);
    let x = g.input();
    let x = g.zero_pad("conv1/pad", x, PadSpec::symmetric(3));
    let x = g.conv2d("conv1/conv", x, 64, (7, 7), (2, 2), Padding::Valid, false);
    let x = g.batch_norm("conv1/bn", x, BN_MOMENTUM, BN_EPS_RESNET);
    let x = g.relu("conv1/relu", x);
    let x = g.zero_pad("pool1_pad", x, PadSpec::symmetric(1));
    let x = g.max_pool("pool1", x, (3, 3), (2, 2), Padding::Valid);
    let x = dense_block(&mut g, x, 6, "conv2");
    let x = dense_transition(&mut g, x, "pool2");
    let x = dense_block(&mut g, x, 12, "conv3");
    let x = dense_transition(&mut g, x, "pool3");
    let x = dense_block(&mut g, x, 48, "conv4");
    let x = dense_transition(&mut g, x, "pool4");
    let x = dense_block(&mut g, x, 32, "conv5");
    let x = g.batch_norm("bn", x, BN_MOMENTUM, BN_EPS_RESNET);
    let x = g.relu("relu", x);
    g.set_output(x);
    g
}

// ------------------------------------------------------------------ Xception

/// Depthwise-separable conv: depthwise 3x3 then pointwise 1x1, both unbiased.
fn sepconv(g: &mut Graph, x: NodeId, filters: usize, name: &str) -> NodeId {
    let d = g.depthwise(name, x, (3, 3), (1, 1), Padding::Same);
    g.conv2d(&format!("{name}_pointwise"), d, filters, (1, 1), (1, 1), Padding::Valid, false)
}

fn xception_entry_block(g: &mut Graph, x: NodeId, filters: usize, first_relu: bool, block: &str) -> NodeId {
    let residual = g.conv2d(&format!("{block}_res_conv"), x, filters, (1, 1), (2, 2), Padding::Same, false);
    let residual = g.batch_norm(&format!("{block}_res_bn"), residual, BN_MOMENTUM, BN_EPS_DEFAULT);
    let mut y = x;
    if first_relu {
        y = g.relu(&format!("{block}_sepconv1_act"), y);
    }
    let y = sepconv(g, y, filters, &format!("{block}_sepconv1"));
    let y = g.batch_norm(&format!("{block}_sepconv1_bn"), y, BN_MOMENTUM, BN_EPS_DEFAULT);
    let y = g.relu(&format!("{block}_sepconv2_act"), y);
    let y = sepconv(g, y, filters, &format!("{block}_sepconv2"));
    let y = g.batch_norm(&format!("{block}_sepconv2_bn"), y, BN_MOMENTUM, BN_EPS_DEFAULT);
    let y = g.max_pool(&format!("{block}_pool"), y, (3, 3), (2, 2), Padding::Same);
    g.add(&format!("{block}_add"), y, residual, 1.0)
}

fn xception_middle_block(g: &mut Graph, x: NodeId, block: &str) -> NodeId {
    let mut y = x;
    for i in 1..=3 {
        y = g.relu(&format!("{block}_sepconv{i}_act"), y);
        y = sepconv(g, y, 728, &format!("{block}_sepconv{i}"));
        y = g.batch_norm(&format!("{block}_sepconv{i}_bn"), y, BN_MOMENTUM, BN_EPS_DEFAULT);
    }
    g.add(&format!("{block}_add"), y, x, 1.0)
}

/// Xception; final feature map (8, 8, 2048) at 256 input.
pub fn xception(seed: u64) -> Graph {
    let mut g = Graph::new((INPUT_SIDE, INPUT_SIDE, 3), seed);
    let x = g.input();
    let x = g.conv2d("block1_conv1", x, 32, (3, 3), (2, 2), Padding::Valid, false);
    let x = g.batch_norm("block1_conv1_bn", x, BN_MOMENTUM, BN_EPS_DEFAULT);
    let x = g.relu("block1_conv1_act", x);
    let x = g.conv2d("block1_conv2", x, 64, (3, 3), (1, 1), Padding::Valid, false);
    let x = g.batch_norm("block1_conv2_bn", x, BN_MOMENTUM, BN_EPS_DEFAULT);
    let x = g.relu("block1_conv2_act", x);

    let x = xception_entry_block(&mut g, x, 128, false, "block2");
    let x = xception_entry_block(&mut g, x, 256, true, "block3");
    let x = xception_entry_block(&mut g, x, 728, true, "block4");

    let mut x = x;
    for b in 5..=12 {
        x = xception_middle_block(&mut g, x, &format!("block{b}"));
    }

    // exit block: 728 -> 1024 with strided pool, then 1536/2048 sepconvs
    let residual = g.conv2d("block13_res_conv", x, 1024, (1, 1), (2, 2), Padding::Same, false);
    let residual = g.batch_norm("block13_res_bn", residual, BN_MOMENTUM, BN_EPS_DEFAULT);
    let y = g.relu("block13_sepconv1_act", x);
    let y = sepconv(&mut g, y, 728, "block13_sepconv1");
    let y = g.batch_norm("block13_sepconv1_bn", y, BN_MOMENTUM, BN_EPS_DEFAULT);
    let y = g.relu("block13_sepconv2_act", y);
    let y = sepconv(&mut g, y, 1024, "block13_sepconv2");
    let y = g.batch_norm("block13_sepconv2_bn", y, BN_MOMENTUM, BN_EPS_DEFAULT);
    let y = g.max_pool("block13_pool", y, (3, 3), (2, 2), Padding::Same);
    let x = g.add("block13_add", y, residual, 1.0);

    let x = sepconv(&mut g, x, 1536, "block14_sepconv1");
    let x = g.batch_norm("block14_sepconv1_bn", x, BN_MOMENTUM, BN_EPS_DEFAULT);
    let x = g.relu("block14_sepconv1_act", x);
    let x = sepconv(&mut g, x, 2048, "block14_sepconv2");
    let x = g.batch_norm("block14_sepconv2_bn", x, BN_MOMENTUM, BN_EPS_DEFAULT);
    let x = g.relu("block14_sepconv2_act", x);
    g.set_output(x);
    g
}

// ------------------------------------------------------- InceptionResNetV2

/// conv + BN (+ relu unless `activation` is false).
#[allow(clippy::too_many_arguments)]
fn conv_bn(
    g: &mut Graph,
    x: NodeId,
    filters: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
    padding: Padding,
    activation: bool,
    name: &str,
) -> NodeId {
    let y = g.conv2d(&format!("{name}_conv"), x, filters, kernel, stride, padding, false);
    let y = g.batch_norm(&format!("{name}_bn"), y, BN_MOMENTUM, BN_EPS_DEFAULT);
    if activation {
        g.relu(&format!("{name}_ac"), y)
    } else {
        y
    }
}

fn block35(g: &mut Graph, x: NodeId, scale: f32, name: &str) -> NodeId {
    let b0 = conv_bn(g, x, 32, (1, 1), (1, 1), Padding::Same, true, &format!("{name}_b0_0"));
    let b1 = conv_bn(g, x, 32, (1, 1), (1, 1), Padding::Same, true, &format!("{name}_b1_0"));
    let b1 = conv_bn(g, b1, 32, (3, 3), (1, 1), Padding::Same, true, &format!("{name}_b1_1"));
    let b2 = conv_bn(g, x, 32, (1, 1), (1, 1), Padding::Same, true, &format!("{name}_b2_0"));
    let b2 = conv_bn(g, b2, 48, (3, 3), (1, 1), Padding::Same, true, &format!("{name}_b2_1"));
    let b2 = conv_bn(g, b2, 64, (3, 3), (1, 1), Padding::Same, true, &format!("{name}_b2_2"));
    let mixed = g.concat(&format!("{name}_mixed"), &[b0, b1, b2]);
    let up = g.conv2d(&format!("{name}_conv"), mixed, 320, (1, 1), (1, 1), Padding::Valid, true);
    let sum = g.add(&format!("{name}_sum"), x, up, scale);
    g.relu(&format!("{name}_ac"), sum)
}

fn block17(g: &mut Graph, x: NodeId, scale: f32, name: &str) -> NodeId {
    let b0 = conv_bn(g, x, 192, (1, 1), (1, 1), Padding::Same, true, &format!("{name}_b0_0"));
    let b1 = conv_bn(g, x, 128, (1, 1), (1, 1), Padding::Same, true, &format!("{name}_b1_0"));
    let b1 = conv_bn(g, b1, 160, (1, 7), (1, 1), Padding::Same, true, &format!("{name}_b1_1"));
    let b1 = conv_bn(g, b1, 192, (7, 1), (1, 1), Padding::Same, true, &format!("{name}_b1_2"));
    let mixed = g.concat(&format!("{name}_mixed"), &[b0, b1]);
    let up = g.conv2d(&format!("{name}_conv"), mixed, 1088, (1, 1), (1, 1), Padding::Valid, true);
    let sum = g.add(&format!("{name}_sum"), x, up, scale);
    g.relu(&format!("{name}_ac"), sum)
}

fn block8(g: &mut Graph, x: NodeId, scale: f32, activation: bool, name: &str) -> NodeId {
    let b0 = conv_bn(g, x, 192, (1, 1), (1, 1), Padding::Same, true, &format!("{name}_b0_0"));
    let b1 = conv_bn(g, x, 192, (1, 1), (1, 1), Padding::Same, true, &format!("{name}_b1_0"));
    let b1 = conv_bn(g, b1, 224, (1, 3), (1, 1), Padding::Same, true, &format!("{name}_b1_1"));
    let b1 = conv_bn(g, b1, 256, (3, 1), (1, 1), Padding::Same, true, &format!("{name}_b1_2"));
    let mixed = g.concat(&format!("{name}_mixed"), &[b0, b1]);
    let up = g.conv2d(&format!("{name}_conv"), mixed, 2080, (1, 1), (1, 1), Padding::Valid, true);
    let sum = g.add(&format!("{name}_sum"), x, up, scale);
    if activation {
        g.relu(&format!("{name}_ac"), sum)
    } else {
        sum
    }
}

/// Inception-ResNet v2; final feature map (6, 6, 1536) at 256 input.
pub fn inception_resnet_v2(seed: u64) -> Graph {
    let mut g = Graph::new((INPUT_SIDE, INPUT_SIDE, 3), seed);
    let x = g.input();
    let x = conv_bn(&mut g, x, 32, (3, 3), (2, 2), Padding::Valid, true, "stem_1");
    let x = conv_bn(&mut g, x, 32, (3, 3), (1, 1), Padding::Valid, true, "stem_2");
    let x = conv_bn(&mut g, x, 64, (3, 3), (1, 1), Padding::Same, true, "stem_3");
    let x = g.max_pool("stem_pool1", x, (3, 3), (2, 2), Padding::Valid);
    let x = conv_bn(&mut g, x, 80, (1, 1), (1, 1), Padding::Valid, true, "stem_4");
    let x = conv_bn(&mut g, x, 192, (3, 3), (1, 1), Padding::Valid, true, "stem_5");
    let x = g.max_pool("stem_pool2", x, (3, 3), (2, 2), Padding::Valid);

    // mixed_5b
    let b0 = conv_bn(&mut g, x, 96, (1, 1), (1, 1), Padding::Same, true, "mixed5b_b0");
    let b1 = conv_bn(&mut g, x, 48, (1, 1), (1, 1), Padding::Same, true, "mixed5b_b1_0");
    let b1 = conv_bn(&mut g, b1, 64, (5, 5), (1, 1), Padding::Same, true, "mixed5b_b1_1");
    let b2 = conv_bn(&mut g, x, 64, (1, 1), (1, 1), Padding::Same, true, "mixed5b_b2_0");
    let b2 = conv_bn(&mut g, b2, 96, (3, 3), (1, 1), Padding::Same, true, "mixed5b_b2_1");
    let b2 = conv_bn(&mut g, b2, 96, (3, 3), (1, 1), Padding::Same, true, "mixed5b_b2_2");
    let bp = g.avg_pool("mixed5b_pool", x, (3, 3), (1, 1), Padding::Same);
    let bp = conv_bn(&mut g, bp, 64, (1, 1), (1, 1), Padding::Same, true, "mixed5b_bp");
    let mut x = g.concat("mixed_5b", &[b0, b1, b2, bp]);

    for i in 1..=10 {
        x = block35(&mut g, x, 0.17, &format!("block35_{i}"));
    }

    // mixed_6a
    let b0 = conv_bn(&mut g, x, 384, (3, 3), (2, 2), Padding::Valid, true, "mixed6a_b0");
    let b1 = conv_bn(&mut g, x, 256, (1, 1), (1, 1), Padding::Same, true, "mixed6a_b1_0");
    let b1 = conv_bn(&mut g, b1, 256, (3, 3), (1, 1), Padding::Same, true, "mixed6a_b1_1");
    let b1 = conv_bn(&mut g, b1, 384, (3, 3), (2, 2), Padding::Valid, true, "mixed6a_b1_2");
    let bp = g.max_pool("mixed6a_pool", x, (3, 3), (2, 2), Padding::Valid);
    let mut x = g.concat("mixed_6a", &[b0, b1, bp]);

    for i in 1..=20 {
        x = block17(&mut g, x, 0.1, &format!("block17_{i}"));
    }

    // mixed_7a
    let b0 = conv_bn(&mut g, x, 256, (1, 1), (1, 1), Padding::Same, true, "mixed7a_b0_0");
    let b0 = conv_bn(&mut g, b0, 384, (3, 3), (2, 2), Padding::Valid, true, "mixed7a_b0_1");
    let b1 = conv_bn(&mut g, x, 256, (1, 1), (1, 1), Padding::Same, true, "mixed7a_b1_0");
    let b1 = conv_bn(&mut g, b1, 288, (3, 3), (2, 2), Padding::Valid, true, "mixed7a_b1_1");
    let b2 = conv_bn(&mut g, x, 256, (1, 1), (1, 1), Padding::Same, true, "mixed7a_b2_0");
    let b2 = conv_bn(&mut g, b2, 288, (3, 3), (1, 1), Padding::Same, true, "mixed7a_b2_1");
    let b2 = conv_bn(&mut g, b2, 320, (3, 3), (2, 2), Padding::Valid, true, "mixed7a_b2_2");
    let bp = g.max_pool("mixed7a_pool", x, (3, 3), (2, 2), Padding::Valid);
    let mut x = g.concat("mixed_7a", &[b0, b1, b2, bp]);

    for i in 1..=9 {
        x = block8(&mut g, x, 0.2, true, &format!("block8_{i}"));
    }
    let x = block8(&mut g, x, 1.0, false, "block8_10");

    let x = conv_bn(&mut g, x, 1536, (1, 1), (1, 1), Padding::Same, true, "conv_7b");
    g.set_output(x);
    g
}
