use super::*;
use crate::ir::{interpret, parse_ir, print_ir, MemoryImage, Value};

pub(crate) const FIG1: &str = "func scale(%n, %k) {
  space a elem=4 extent=64 readonly stream
  space b elem=4 extent=64 stream
block entry:
  jmp loop
block loop:
  %i = phi [entry: 0, body: %i1]
  %c = icmp slt %i, %n
  br %c, body, exit
block body:
  %v = load a[%i]
  %m = fmul %v, %k
  store b[%i], %m
  %i1 = iadd %i, 1
  jmp loop
block exit:
  ret
}
";

fn build(text: &str, dup: usize) -> Pipeline {
    Pipeline::build(&parse_ir(text).unwrap(), &LatencyTable::default(), dup, 16).unwrap()
}

fn stage_labels(p: &Pipeline) -> Vec<Vec<String>> {
    p.plan
        .stages
        .iter()
        .map(|st| st.iter().map(|&n| p.graph.node_label(n)).collect())
        .collect()
}

#[test]
fn fig1_stages() {
    let p = build(FIG1, 0);
    assert_eq!(
        stage_labels(&p),
        vec![
            vec!["%i", "%c", "br@loop.2", "%v", "%i1"],
            vec!["%m"],
            vec!["store@body.2"],
        ]
    );
    assert!(check_plan(&p.plan, &p.channels, &p.graph, &p.sccs, &p.dag).is_empty());
}

#[test]
fn fig1_stage1_program_golden() {
    let p = build(FIG1, 0);
    let expected = "func scale.s1(%n, %k) {
  space a elem=4 extent=64 readonly stream
  space b elem=4 extent=64 stream
  chan c1
  chan c3
  chan c4
block entry:
  jmp loop
block loop:
  %c = pop c1
  br %c, body, exit
block body:
  %v = pop c3
  %m = fmul %v, %k
  push c4, %m
  jmp loop
block exit:
  ret
}
";
    assert_eq!(print_ir(&p.stages[1].program), expected);
}

#[test]
fn fig1_duplication_replicates_counter() {
    let p = build(FIG1, DEFAULT_MAX_DUP_NODES);
    let counter = p.sccs.comp_of[p.graph.def_of("i").unwrap()];
    assert!(p.plan.duplicated.contains(&(counter, 1)));
    assert!(p.plan.duplicated.contains(&(counter, 2)));
    let values: Vec<&str> = p.channels.iter().map(|c| c.value.as_str()).collect();
    assert_eq!(values, vec!["v", "m"]);
    assert!(p.channels.iter().all(|c| c.payload == Payload::Data));
    let undup = build(FIG1, 0);
    assert!(p.channels.len() < undup.channels.len());
}

fn fig1_inputs() -> (Program, MemoryImage, Vec<Value>) {
    let prog = parse_ir(FIG1).unwrap();
    let mut mem = MemoryImage::zeroed(&prog.spaces);
    mem.fill("a", (0..64).map(|i| Value::Float(i as f32 * 0.5)));
    (prog, mem, vec![Value::Int(50), Value::Float(3.0)])
}

#[test]
fn fig1_queued_matches_sequential() {
    let (prog, mem, args) = fig1_inputs();
    let (want, ret, _) = interpret(&prog, mem.clone(), &args, 1_000_000).unwrap();
    for dup in [0, 8] {
        for depth in [1, 2, 16] {
            let p = Pipeline::build(&prog, &LatencyTable::default(), dup, depth).unwrap();
            let (got, got_ret) = run_queued(&p.stages, &p.channels, &mem, &args, 1_000_000).unwrap();
            assert_eq!(got.digest(), want.digest(), "dup={dup} depth={depth}");
            assert_eq!(got_ret, ret);
        }
    }
}

#[test]
fn integer_only_kernel_is_one_stage_without_channels() {
    let p = build(
        "func f(%n) {\nblock entry:\n jmp loop\nblock loop:\n %i = phi [entry: 0, loop: %i1]\n %s = phi [entry: 0, loop: %s1]\n\
         %s1 = iadd %s, %i\n %i1 = iadd %i, 1\n %c = icmp slt %i1, %n\n br %c, loop, exit\nblock exit:\n ret %s1\n}",
        8,
    );
    assert_eq!(p.plan.len(), 1);
    assert!(p.channels.is_empty());
    let text = print_ir(&p.stages[0].program);
    assert!(!text.contains("phi") && !text.contains("push") && !text.contains("pop"), "{text}");
    assert!(p.stages[0].returns_value);
}

#[test]
fn shared_value_uses_one_channel_per_consumer() {
    // %x feeds two uses in stage 1 and one in stage 2.
    let p = build(
        "func f(%k) {\n space a elem=4 extent=8\n space b elem=4 extent=8\nblock entry:\n\
         %x = load a[0]\n %y = fmul %x, %x\n %z = iadd %x, 1\n store b[%z], %y\n ret\n}",
        0,
    );
    assert_eq!(p.plan.len(), 3);
    let x_channels: Vec<_> = p.channels.iter().filter(|c| c.value == "x").collect();
    assert_eq!(x_channels.len(), 2);
    assert_eq!((x_channels[0].consumer, x_channels[1].consumer), (1, 2));
}

#[test]
fn swapped_phis_use_temporaries() {
    let text = "func f(%n) {\nblock entry:\n jmp loop\nblock loop:\n\
         %a = phi [entry: 1, loop: %b]\n %b = phi [entry: 2, loop: %a]\n %i = phi [entry: 0, loop: %i1]\n\
         %i1 = iadd %i, 1\n %c = icmp slt %i1, %n\n br %c, loop, exit\nblock exit:\n %r = isub %a, %b\n ret %r\n}";
    let prog = parse_ir(text).unwrap();
    let p = build(text, 0);
    let mem = MemoryImage::zeroed(&prog.spaces);
    for n in 1..5 {
        let args = [Value::Int(n)];
        let (_, want, _) = interpret(&prog, mem.clone(), &args, 10_000).unwrap();
        let (_, got) = run_queued(&p.stages, &p.channels, &mem, &args, 10_000).unwrap();
        assert_eq!(got, want, "n={n}");
    }
}

#[test]
fn multiple_returns_are_merged() {
    let text = "func f(%x) {\n space a elem=4 extent=4\nblock entry:\n %v = load a[0]\n %c = icmp slt %v, %x\n br %c, l, r\n\
        block l:\n ret %v\nblock r:\n %w = imul %v, 2\n ret %w\n}";
    let prog = parse_ir(text).unwrap();
    let p = build(text, 8);
    let mut mem = MemoryImage::zeroed(&prog.spaces);
    mem.fill("a", [Value::Int(3)]);
    for x in [0, 5] {
        let args = [Value::Int(x)];
        let (_, want, _) = interpret(&prog, mem.clone(), &args, 100).unwrap();
        let (_, got) = run_queued(&p.stages, &p.channels, &mem, &args, 1000).unwrap();
        assert_eq!(got, want);
    }
}

#[test]
fn emission_is_deterministic() {
    let a = build(FIG1, 8);
    let b = build(FIG1, 8);
    for (x, y) in a.stages.iter().zip(&b.stages) {
        assert_eq!(print_ir(&x.program), print_ir(&y.program));
    }
    assert_eq!(a.manifest_json(), b.manifest_json());
}

#[test]
fn random_programs_partition_soundly_and_run_equivalently() {
    for seed in 0..60 {
        let (prog, mem, args) = crate::testgen::random_program(seed);
        let (want, ret, _) = interpret(&prog, mem.clone(), &args, 1_000_000).unwrap();
        for dup in [0, 8] {
            let p = Pipeline::build(&prog, &LatencyTable::default(), dup, 2)
                .unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", print_ir(&prog)));
            let v = check_plan(&p.plan, &p.channels, &p.graph, &p.sccs, &p.dag);
            assert!(v.is_empty(), "seed {seed}: {v:?}");
            let (got, got_ret) = run_queued(&p.stages, &p.channels, &mem, &args, 10_000_000)
                .unwrap_or_else(|e| panic!("seed {seed} dup {dup}: {e}\n{}", print_ir(&prog)));
            assert_eq!(got.digest(), want.digest(), "seed {seed} dup {dup}\n{}", print_ir(&prog));
            assert_eq!(got_ret, ret, "seed {seed}");
        }
    }
}
