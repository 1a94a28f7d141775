//! The geometric primitives behind affordance extraction: rotation fitting,
//! trajectory simplification and direction quantization.

use demo2plan::affordance::{fit_rotation, fit_slide, quantize_direction, rdp, surface_normal};
use demo2plan::perception::Vec3;

fn main() -> anyhow::Result<()> {
    // a door handle swinging 90 degrees about a vertical hinge
    let hinge = Vec3::new(0.3, 0.0, 1.2);
    let arc: Vec<Vec3> = (0..=30)
        .map(|i| {
            let t = std::f64::consts::FRAC_PI_2 * i as f64 / 30.0;
            hinge + Vec3::new(0.4 * t.cos(), 0.0, -0.4 * t.sin())
        })
        .collect();
    let fit = fit_rotation(&arc, 1e-3)?;
    println!(
        "rotation: center {:.3?} radius {:.3} angle {:.1} deg axis {:.3?}",
        fit.center.as_slice(),
        fit.radius,
        fit.angle.to_degrees(),
        fit.axis.as_slice()
    );

    let simplified = rdp(&arc, 0.01);
    println!("rdp: {} points down to {}", arc.len(), simplified.len());

    let drawer: Vec<Vec3> = (0..20).map(|i| Vec3::new(0.0, 0.01 * i as f64, -0.015 * i as f64)).collect();
    let slide = fit_slide(&drawer)?;
    println!("slide: displacement {:.3?} along principal axis {:.3}", slide.displacement.as_slice(), slide.principal_magnitude);

    let wipe: Vec<Vec3> = (0..40).map(|i| {
        let t = i as f64 * 0.3;
        Vec3::new(0.1 * t.cos(), 0.02 * (t * 0.5).sin(), 0.8 + 0.1 * t.sin())
    }).collect();
    println!("surface normal {:.3?}", surface_normal(&wipe)?.as_slice());

    for v in [Vec3::new(1.0, 0.9, 0.1), Vec3::new(0.2, -1.0, 0.05), Vec3::new(-1.0, -1.0, 1.0)] {
        println!("quantize {:?} -> {:.3?}", v.as_slice(), quantize_direction(&v)?.as_slice());
    }
    Ok(())
}
