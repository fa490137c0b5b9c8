use placerec_core::geometry::find_correspondences;
use placerec_core::synthdata::{generate_dataset, generate_world, revisit_labels, Benchmark};

#[test]
fn revisit_pairs_overlap_without_pose_noise() {
    let mut b = Benchmark::desk(300);
    b.trajectory.pose_noise_translation = 0.0;
    b.trajectory.pose_noise_rotation_deg = 0.0;
    let ds = generate_dataset(&generate_world(&b.world, 2).unwrap(), &b.trajectory, &b.scan, 5).unwrap();
    assert!(ds.labels.len() > 100);
    for &(q, m) in &ds.labels {
        let c = find_correspondences(&ds.scans[q], &ds.scans[m], &ds.poses[q], &ds.poses[m], 0.3, None).unwrap();
        assert!(!c.is_empty(), "revisit ({q}, {m}) has no correspondences");
    }
}

#[test]
fn labels_equal_pairwise_pose_scan() {
    let b = Benchmark::desk(300);
    let ds = generate_dataset(&generate_world(&b.world, 1).unwrap(), &b.trajectory, &b.scan, 11).unwrap();
    let spec = &b.trajectory;
    let mut brute = Vec::new();
    for q in 0..ds.true_poses.len() {
        for m in 0..q {
            let (a, c) = (&ds.true_poses[q], &ds.true_poses[m]);
            let d = ((a.translation.x - c.translation.x).powi(2)
                + (a.translation.y - c.translation.y).powi(2)
                + (a.translation.z - c.translation.z).powi(2))
            .sqrt();
            if a.timestamp - c.timestamp >= spec.label_min_time && d < spec.revisit_radius {
                brute.push((q, m));
            }
        }
    }
    assert!(!brute.is_empty());
    assert_eq!(ds.labels, brute);
    assert_eq!(revisit_labels(&ds.true_poses, spec.revisit_radius, spec.label_min_time), brute);
}
