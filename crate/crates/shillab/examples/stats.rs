fn main() {
    let dir = std::env::temp_dir().join("shillab-calibrate");
    let ratings = dir.join("ratings.data");
    let full = shillab::data::load_ratings(&ratings, shillab::data::RatingsFormat::MovielensTab, 0.0).unwrap().interactions;
    let mut counts = full.item_counts();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let total: usize = counts.iter().sum();
    for n in [20, 100, 300] {
        let head: usize = counts[..n].iter().sum();
        println!("top-{n} items: {:.1}% of interactions", 100.0 * head as f64 / total as f64);
    }
    println!("top counts: {:?}", &counts[..10]);
    let mut lens: Vec<usize> = full.rows().iter().map(|r| r.len()).collect();
    lens.sort_unstable();
    println!("user lens: min {} p25 {} median {} mean {:.0} p75 {} max {}",
        lens[0], lens[lens.len()/4], lens[lens.len()/2], total as f64 / lens.len() as f64, lens[3*lens.len()/4], lens[lens.len()-1]);
    let zero = counts.iter().filter(|&&c| c == 0).count();
    println!("items with zero interactions: {zero}");
}
