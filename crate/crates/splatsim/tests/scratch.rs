// Temporary probe for segmentation quality on the synthetic benchmark.

use splatsim::render::{render_binary_mask, render_surface_depth};
use splatsim::scene::IdMask;
use splatsim::segment::{
    assign_view_votes, default_boundary_radius, mbiou, miou, VoteTable,
};
use splatsim::synth::{generate, SynthParams};

#[test]
#[ignore]
fn probe_segmentation_quality() {
    let t0 = std::time::Instant::now();
    let params = SynthParams::default();
    let synth = generate(&params);
    println!("generate: {:?} ({} gaussians)", t0.elapsed(), synth.scene.len());

    let tau_t = 0.5;
    let tau_d = 0.03;
    let mut votes = VoteTable::new(synth.scene.len());
    let t1 = std::time::Instant::now();
    for (cam, mask) in synth.cameras.iter().zip(synth.masks.iter()) {
        let depth = render_surface_depth(&synth.scene, cam, tau_t, None);
        assign_view_votes(&synth.scene, cam, &depth, mask, tau_d, &mut votes).unwrap();
    }
    println!("depth+votes: {:?}", t1.elapsed());

    let ids = votes.final_ids();
    let mut correct = 0usize;
    let mut object_total = 0usize;
    let mut zero_votes = 0usize;
    for (got, want) in ids.iter().zip(synth.gt_ids.iter()) {
        if *want != 0 {
            object_total += 1;
            if got == want {
                correct += 1;
            }
            if *got == 0 {
                zero_votes += 1;
            }
        }
    }
    println!(
        "correct ids: {}/{} = {:.4} (no-vote: {})",
        correct,
        object_total,
        correct as f64 / object_total as f64,
        zero_votes
    );

    // 3D-level mask protocol.
    let mut segmented = synth.scene.clone();
    splatsim::segment::apply_final_ids(&mut segmented, &ids);
    let radius = default_boundary_radius(params.image_size, params.image_size);
    let t2 = std::time::Instant::now();
    let mut mious = Vec::new();
    let mut mbious = Vec::new();
    for (view, (cam, gt)) in synth.cameras.iter().zip(synth.masks.iter()).enumerate() {
        let mut pred = IdMask::new(cam.width, cam.height);
        let mut best_depth = vec![f32::INFINITY; (cam.width * cam.height) as usize];
        for id in [1u16, 2] {
            let subset = splatsim::segment::extract_object(&segmented, id as u32);
            let depth = render_surface_depth(&subset, cam, tau_t, None);
            for ((p, bd), &d) in pred
                .ids
                .iter_mut()
                .zip(best_depth.iter_mut())
                .zip(depth.depth.iter())
            {
                if d != splatsim::render::DepthMap::SENTINEL && d < *bd {
                    *bd = d;
                    *p = id;
                }
            }
        }
        if view == 1 {
            let area_pred = pred.ids.iter().filter(|&&v| v == 1).count() as f64;
            let area_gt = gt.ids.iter().filter(|&&v| v == 1).count() as f64;
            println!(
                "view 1 ball1: pred area {area_pred}, gt area {area_gt}, radius ratio {:.4}",
                (area_pred / area_gt).sqrt()
            );
        }
        mious.push(miou(&pred, gt).unwrap());
        mbious.push(mbiou(&pred, gt, radius).unwrap());
    }
    println!("mask renders: {:?}", t2.elapsed());
    let mean_iou: f64 = mious.iter().sum::<f64>() / mious.len() as f64;
    let mean_biou: f64 = mbious.iter().sum::<f64>() / mbious.len() as f64;
    println!("per-view miou: {mious:.3?}");
    println!("mIoU = {mean_iou:.4}, mBIoU = {mean_biou:.4} (radius {radius})");
    println!("total: {:?}", t0.elapsed());
}
