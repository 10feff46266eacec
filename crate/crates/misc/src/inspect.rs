use std::fmt::Write;

use misc_core::container::ContainerError;
use misc_core::{MiscContainer, PixelPayload, Section};

/// Human-readable dump of a container: header, texts, maps as character
/// grids, pixel payload and the per-section rate.
pub fn render(c: &MiscContainer) -> Result<String, ContainerError> {
    let report = c.rate_report()?;
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "MSCB v{}  level {}  {}x{}  J={}", c.version, c.level, c.width, c.height, c.semantic.items.len());
    let _ = writeln!(w, "text: {}", if c.text_compressed { "deflate" } else { "raw" });
    for (i, item) in c.semantic.items.iter().enumerate() {
        let _ = writeln!(w, "item {}: {}", i + 1, item.name);
        let _ = writeln!(w, "  detail: {}", item.detail);
    }
    if c.semantic.detail_all.is_empty() {
        let _ = writeln!(w, "detail_all: (none)");
    } else {
        let _ = writeln!(w, "detail_all: {}", c.semantic.detail_all);
    }
    for (i, (map, bits)) in c.maps.iter().zip(&report.map_bits).enumerate() {
        let _ = writeln!(w, "map {}: {}x{}, {} of {} cells set, {} bits", i + 1, map.rows(), map.cols(), map.popcount(), map.bits().len(), bits);
        for r in 0..map.rows() as usize {
            let line: String = (0..map.cols() as usize).map(|col| if map.get(r, col) { '#' } else { '.' }).collect();
            let _ = writeln!(w, "  {line}");
        }
    }
    match &c.pixel {
        PixelPayload::Empty => {
            let _ = writeln!(w, "pixels: none");
        }
        PixelPayload::Quantized(q) => {
            let _ = writeln!(w, "pixels: quantized {}x{} at {} bits per channel", q.width(), q.height(), q.bits());
        }
        PixelPayload::Neural(bytes) => {
            let _ = writeln!(w, "pixels: learned codec, {} bytes", bytes.len());
        }
    }
    let _ = writeln!(w, "rate:");
    for section in Section::ALL {
        let _ = writeln!(w, "  {:<9}{:>8} bits  {:.6} bpp", section.name(), report.bits(section), report.section_bpp(section));
    }
    let _ = writeln!(w, "  {:<9}{:>8} bits  {:.6} bpp", "total", report.total_bits, report.bpp());
    Ok(s)
}
