use proptest::prelude::*;

use stylize_core::cleanup::guided_filter;
use stylize_core::image::{Image, Plane};
use stylize_core::mrf::{ncc, PatchGrid};
use stylize_core::stack::{build_stack, reconstruct};
use stylize_core::transfer::remap_layer;

fn plane_strategy() -> impl Strategy<Value = Plane> {
    (8usize..40, 8usize..40).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..1.0, w * h).prop_map(move |v| Plane::from_vec(w, h, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stack_reconstructs(p in plane_strategy(), depth in 2usize..6) {
        let back = reconstruct(&build_stack(&p, depth).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&p) < 1e-9);
    }

    #[test]
    fn ncc_is_bounded_and_symmetric(a in prop::collection::vec(0.0f64..1.0, 16), b in prop::collection::vec(0.0f64..1.0, 16)) {
        let ab = ncc(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert!((ab - ncc(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn remap_is_positively_homogeneous(
        l in -1.0f64..1.0, st in 0.0f64..0.5, se in 0.0f64..0.5, k in 0.0f64..5.0,
    ) {
        let one = |v: f64| Plane::new(1, 1, v);
        let base = remap_layer(&one(l), &one(st), &one(se), 1e-4, 10.0).unwrap().get(0, 0);
        let scaled = remap_layer(&one(k * l), &one(st), &one(se), 1e-4, 10.0).unwrap().get(0, 0);
        prop_assert!((scaled - k * base).abs() < 1e-12);
    }

    #[test]
    fn guided_filter_keeps_constants(g in plane_strategy(), c in 0.0f64..1.0, r in 1usize..6) {
        let src = Image::new(g.width(), g.height(), 1, c);
        let out = guided_filter(&src, &Image::from_plane(g), r, 0.02).unwrap();
        prop_assert!(out.max_abs_diff(&src) < 1e-9);
    }

    #[test]
    fn patches_stay_inside(w in 40usize..400, h in 40usize..400, p in 2usize..40, s in 1usize..40) {
        prop_assume!(s <= p && p <= w.min(h));
        let grid = PatchGrid::new(w, h, p, s).unwrap();
        for n in 0..grid.node_count() {
            let r = grid.rect(n);
            prop_assert!(r.x + r.width <= w && r.y + r.height <= h);
        }
    }
}
