mod common;

use proptest::prelude::*;
use segeval::dataset::{scan_dataset, DatasetKind, Split};
use segeval_core::BinaryMask;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Every discovered image is either paired or reported as unmatched,
    /// and the same holds for masks.
    #[test]
    fn discovery_accounts_for_every_file(layout in prop::collection::vec(0u8..3, 1..20)) {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        let gt = common::disk(8, 8, 4, 4, 2);
        let (mut images, mut masks) = (0, 0);
        for (i, &k) in layout.iter().enumerate() {
            // 0: pair, 1: image only, 2: mask only
            let (w, h) = gt.dims();
            if k != 2 {
                common::write_gray(&root.join(format!("images/{i}.png")), w, h, |_, _| 40);
                images += 1;
            }
            if k != 1 {
                common::write_gray(&root.join(format!("masks/{i}.png")), w, h, |x, y| if gt.get(x, y) { 255 } else { 0 });
                masks += 1;
            }
        }
        std::fs::create_dir_all(root.join("images")).unwrap();
        std::fs::create_dir_all(root.join("masks")).unwrap();
        let pairs = layout.iter().filter(|&&k| k == 0).count();
        match scan_dataset(root, DatasetKind::Image, Split::Test) {
            Ok(m) => {
                prop_assert_eq!(m.samples.len(), pairs);
                prop_assert_eq!(m.samples.len() + m.unmatched_images.len(), images);
                prop_assert_eq!(m.samples.len() + m.unmatched_masks.len(), masks);
                prop_assert_eq!(m.warnings().len(), m.unmatched_images.len() + m.unmatched_masks.len());
                let ids: Vec<usize> = m.samples.iter().map(|s| s.id.parse().unwrap()).collect();
                prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
            }
            Err(_) => prop_assert_eq!(pairs, 0),
        }
    }
}

#[test]
fn labels_above_127_collapse_to_foreground() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.png");
    common::write_gray(&path, 4, 1, |x, _| [0u8, 127, 128, 255][x]);
    let m = segeval::dataset::load_mask(&path).unwrap();
    assert_eq!(m, BinaryMask::from_ascii(&["..##"]).unwrap());
}
