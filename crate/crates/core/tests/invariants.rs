use proptest::prelude::*;

use picstbc::codes::{build_code, SHIPPED_CODES};
use picstbc::constellation::make_qam;
use picstbc::cxnum::{vec_norm, vec_sub, CMatrix, C64};
use picstbc::detect::{pic_group_decode, pic_sic_group_decode, zf_decode};
use picstbc::equivch::build;

fn cx() -> impl Strategy<Value = C64> {
    (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(re, im)| C64::new(re, im))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoding_is_linear(code in 0..SHIPPED_CODES.len(), a in cx(), seed in prop::collection::vec(cx(), 54)) {
        let spec = build_code(SHIPPED_CODES[code], None).unwrap();
        let l = spec.symbols();
        let s1 = &seed[..l];
        let s2: Vec<C64> = seed[seed.len() - l..].to_vec();
        let mixed: Vec<C64> = s1.iter().zip(&s2).map(|(x, y)| a * x + y).collect();
        let lhs = spec.encode(&mixed).unwrap().into_matrix();
        let rhs = spec.encode(s1).unwrap().matrix().scaled(a).add(spec.encode(&s2).unwrap().matrix());
        prop_assert!(lhs.sub(&rhs).max_abs() < 1e-12);
    }

    #[test]
    fn equivalent_channel_matches_received_signal(
        code in 0..SHIPPED_CODES.len(),
        rx in 1usize..4,
        s in prop::collection::vec(cx(), 27),
        h in prop::collection::vec(cx(), 27),
    ) {
        let spec = build_code(SHIPPED_CODES[code], None).unwrap();
        let m = spec.antennas();
        let hm = CMatrix::from_fn(m, rx, |i, j| h[(i * 3 + j) % h.len()]);
        let s = &s[..spec.symbols()];
        let eq = build(&spec.dispersion_set(), &hm, spec.grouping()).unwrap();
        let direct = (spec.encode(s).unwrap().matrix() * &hm).vectorize();
        let lhs = eq.apply(s);
        prop_assert!(vec_norm(&vec_sub(&lhs, &direct)) <= 1e-12 * (1.0 + vec_norm(&direct)));
    }

    #[test]
    fn decoders_invert_noiseless_c452(idx in prop::collection::vec(0usize..16, 8), h in prop::collection::vec(cx(), 16)) {
        let spec = build_code("c4-5-2", None).unwrap();
        let c = make_qam(16).unwrap();
        let hm = CMatrix::from_fn(4, 4, |i, j| h[i * 4 + j]);
        let eq = build(&spec.dispersion_set(), &hm, spec.grouping()).unwrap();
        prop_assume!(eq.matrix().singular_values().last().copied().unwrap_or(0.0) > 1e-3);
        let s: Vec<C64> = idx.iter().map(|&i| c.point(i)).collect();
        let y = eq.apply(&s);
        prop_assert_eq!(zf_decode(&y, &eq, &c, 1.0).unwrap().symbol_indices, idx.clone());
        prop_assert_eq!(pic_group_decode(&y, &eq, &c, 1.0).unwrap().symbol_indices, idx.clone());
        prop_assert_eq!(pic_sic_group_decode(&y, &eq, &c, 1.0, None).unwrap().symbol_indices, idx);
    }
}
