use proptest::prelude::*;
use qram_core::circuit::{build_nohe_sequential, expand_gadgets, expected_output, input_bits, Circuit};
use qram_core::encoding::{load_bits, mu, nohe, Address, Dataset};
use qram_core::Gate;

fn swapped_gadgets(c: &Circuit) -> Circuit {
    let mut gates = Vec::new();
    for g in &c.gates {
        if let Gate::Fredkin { control, t0, t1 } = *g {
            gates.push(Gate::Cnot { control: t1, target: t0 });
            gates.push(Gate::Toffoli { c0: control, c1: t0, target: t1 });
        } else {
            gates.push(*g);
        }
    }
    Circuit { n_qubits: c.n_qubits, gates }
}

#[test]
fn wrong_gadget_order_is_caught() {
    let seq = build_nohe_sequential(8, false).unwrap();
    let bad = swapped_gadgets(&seq);
    let good = expand_gadgets(&seq);
    let mut mismatches = 0;
    for x in Address::all(8).unwrap() {
        let want = expected_output(&x, None);
        let mut a = input_bits(seq.n_qubits, &x, None);
        good.simulate(&mut a);
        assert_eq!(a, want);
        let mut b = input_bits(seq.n_qubits, &x, None);
        bad.simulate(&mut b);
        mismatches += usize::from(b != want);
    }
    assert!(mismatches > 0);
}

proptest! {
    #[test]
    fn nohe_weight_is_popcount(k in 1u32..11, seed in any::<u64>()) {
        let n = 1usize << k;
        let x = Address::from_index((seed as usize) % n, n).unwrap();
        let s = nohe(&x);
        prop_assert_eq!(s.weight(), x.index().count_ones() as usize);
        prop_assert_eq!(s.flatten().len(), n - 1);
    }

    #[test]
    fn sequential_circuit_matches_encoding(k in 1u32..9, seed in any::<u64>()) {
        let n = 1usize << k;
        let c = build_nohe_sequential(n, false).unwrap();
        let x = Address::from_index((seed as usize) % n, n).unwrap();
        let mut bits = input_bits(c.n_qubits, &x, None);
        c.simulate(&mut bits);
        prop_assert_eq!(bits, expected_output(&x, None));
    }

    #[test]
    fn load_is_a_relabelling(bits in proptest::collection::vec(0u8..2, 16), b in proptest::collection::vec(0u8..2, 4)) {
        let d = Dataset::from_bits(&bits).unwrap();
        let out = load_bits(&d, &b).unwrap();
        let shift = mu(&b);
        for l in 0..16 {
            prop_assert_eq!(out.get(l), d.get(l ^ shift));
        }
    }
}
