use dtpnet::kernel::ops::ConvSpec;
use dtpnet::kernel::{finite_difference_check, Graph, KernelError, NodeId, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
enum Op {
    Conv { out: usize, kernel: usize, dilation: usize },
    ConvT { out: usize, kernel: usize, stride: usize },
    Relu,
    AddPrev,
    ConcatPrev,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (1..=3usize, 1..=3usize, 1..=2usize).prop_map(|(out, kernel, dilation)| Op::Conv { out, kernel, dilation }),
        (1..=2usize, 1..=3usize, 1..=2usize).prop_map(|(out, kernel, stride)| Op::ConvT { out, kernel, stride }),
        Just(Op::Relu),
        Just(Op::AddPrev),
        Just(Op::ConcatPrev),
    ]
}

/// Shapes of the weight leaves the plan needs, given a `[c, t]` input.
fn weight_shapes(plan: &[Op], c: usize, t: usize) -> Vec<Vec<usize>> {
    let mut shapes = Vec::new();
    let (mut cur, mut prev) = ((c, t), (c, t));
    for &o in plan {
        let next = match o {
            Op::Conv { out, kernel, .. } => {
                shapes.push(vec![out, cur.0, kernel]);
                (out, cur.1)
            }
            Op::ConvT { out, kernel, stride } => {
                shapes.push(vec![cur.0, out, kernel]);
                (out, (cur.1 - 1) * stride + kernel)
            }
            Op::Relu => cur,
            Op::AddPrev if prev == cur => cur,
            Op::ConcatPrev if prev.1 == cur.1 => (cur.0 + prev.0, cur.1),
            Op::AddPrev | Op::ConcatPrev => cur,
        };
        prev = cur;
        cur = next;
    }
    shapes
}

/// Records the plan; returns the output and every ReLU input.
fn record(g: &mut Graph<f64>, ids: &[NodeId], plan: &[Op]) -> Result<(NodeId, Vec<NodeId>), KernelError> {
    let mut weights = ids[1..].iter();
    let (mut cur, mut prev) = (ids[0], ids[0]);
    let mut relu_inputs = Vec::new();
    for &o in plan {
        let (c, t) = g.value(cur).as_matrix_dims()?;
        let next = match o {
            Op::Conv { out, kernel, dilation } => {
                g.conv1d(cur, *weights.next().unwrap(), ConvSpec::same(c, out, kernel, dilation))?
            }
            Op::ConvT { stride, .. } => g.conv_transpose1d(cur, *weights.next().unwrap(), stride)?,
            Op::Relu => {
                relu_inputs.push(cur);
                g.relu(cur)
            }
            Op::AddPrev if g.value(prev).shape() == g.value(cur).shape() => g.add(cur, prev)?,
            Op::ConcatPrev if g.value(prev).shape()[1] == t => g.concat(&[cur, prev])?,
            Op::AddPrev | Op::ConcatPrev => cur,
        };
        prev = cur;
        cur = next;
    }
    Ok((cur, relu_inputs))
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, max_global_rejects: 4096, ..ProptestConfig::default() })]

    #[test]
    fn random_graphs_match_central_differences(
        plan in prop::collection::vec(op(), 1..=6),
        c in 1..=3usize,
        t in 4..=12usize,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = vec![random_tensor(&[c, t], &mut rng)];
        for s in weight_shapes(&plan, c, t) {
            inputs.push(random_tensor(&s, &mut rng));
        }

        // A perturbation that crosses a ReLU kink breaks the comparison, not
        // the gradient; keep only graphs whose ReLU inputs sit clear of zero.
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|x| g.leaf(x.clone())).collect();
        let (_, relus) = record(&mut g, &ids, &plan).unwrap();
        let closest = relus
            .iter()
            .flat_map(|&r| g.value(r).data().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min);
        prop_assume!(closest > 1e-3);

        let report = finite_difference_check(|g, ids| Ok(record(g, ids, &plan)?.0), &inputs, 1e-5).unwrap();
        prop_assert!(report.max_relative_error <= 1e-6, "{report:?}");
    }

    #[test]
    fn conv_is_linear_in_its_input(
        seed in any::<u64>(),
        kernel in 1..=5usize,
        dilation in 1..=3usize,
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_tensor(&[2, 3, kernel], &mut rng);
        let x = random_tensor(&[3, 20], &mut rng);
        let y = random_tensor(&[3, 20], &mut rng);
        let spec = ConvSpec::same(3, 2, kernel, dilation);
        let conv = |v: &Tensor<f64>| dtpnet::kernel::ops::conv1d(v, &w, &spec).unwrap();
        let mixed = Tensor::new(
            &[3, 20],
            x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect(),
        ).unwrap();
        let (cx, cy, cm) = (conv(&x), conv(&y), conv(&mixed));
        for i in 0..cm.len() {
            let expect = a * cx.data()[i] + b * cy.data()[i];
            prop_assert!((cm.data()[i] - expect).abs() <= 1e-12, "{i}");
        }
    }
}
