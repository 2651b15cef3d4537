//! Deterministic benchmark-scale fixture datasets.
//!
//! Two generators mirror the published benchmark shapes: a restaurants
//! linkage task (533 x 331 rows, 112 matches, 7 columns) and a citations
//! task at DBLP/ACM scale, with a variant whose right table contains
//! duplicate entries. Corruption is seeded and independent of the model
//! under test: abbreviations, token reorder and drops, character typos,
//! format changes, and missing values.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct BenchDataset {
    pub left_csv: String,
    pub right_csv: String,
    pub gold_csv: String,
    pub n_matches: usize,
}

fn typo(rng: &mut ChaCha8Rng, s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() < 4 {
        return s.to_string();
    }
    let i = rng.random_range(1..chars.len() - 1);
    let mut out = chars.clone();
    match rng.random_range(0..3u8) {
        0 => {
            out.remove(i);
        }
        1 => out.swap(i - 1, i),
        2 => out[i] = (b'a' + rng.random_range(0..26u8)) as char,
        _ => unreachable!(),
    }
    out.into_iter().collect()
}

fn maybe_typos(rng: &mut ChaCha8Rng, s: &str, p: f64) -> String {
    let mut out = s.to_string();
    while rng.random::<f64>() < p && out.len() > 4 {
        out = typo(rng, &out);
    }
    out
}

fn csv_cell(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------- restaurants

const ADJECTIVES: &[&str] = &[
    "golden", "blue", "royal", "rustic", "silver", "olive", "jade", "crimson", "sunny", "velvet",
    "ancient", "coastal", "lucky", "grand", "little", "hidden",
];
const NOUNS: &[&str] = &[
    "palace", "bistro", "grill", "kitchen", "garden", "terrace", "tavern", "cantina", "brasserie",
    "diner", "oven", "table", "lantern", "harbor", "dragon", "rose",
];
const PERSONS: &[&str] = &[
    "rosa", "marco", "luigi", "pedro", "akira", "ming", "helena", "otto", "nadia", "rafael",
    "giulia", "sven", "amara", "dimitri", "keiko", "pablo", "greta", "omar", "lucia", "henri",
    "yuki", "carmen", "bruno", "elsa",
];
const CUISINES: &[&str] = &[
    "italian", "french", "thai", "mexican", "japanese", "chinese", "indian", "greek", "spanish",
    "korean", "american (new)", "american (traditional)", "seafood", "steakhouses", "bbq",
    "vegan", "fusion", "cajun", "coffee shops", "pizzeria",
];
const CITIES: &[(&str, &str, &str)] = &[
    // (full name, abbreviation, area code)
    ("los angeles", "la", "310"),
    ("new york", "nyc", "212"),
    ("san francisco", "sf", "415"),
    ("atlanta", "atlanta", "404"),
    ("chicago", "chicago", "312"),
    ("boston", "boston", "617"),
    ("seattle", "seattle", "206"),
    ("austin", "austin", "512"),
    ("denver", "denver", "303"),
    ("miami", "miami", "305"),
    ("portland", "portland", "503"),
    ("philadelphia", "philadelphia", "215"),
];
const STREETS: &[&str] = &[
    "ocean avenue", "main street", "sunset boulevard", "fifth avenue", "market street",
    "peachtree road", "broadway", "king street", "lake shore drive", "mission street",
    "canal street", "union square", "melrose avenue", "magnolia street",
];

#[derive(Clone)]
struct Restaurant {
    name: String,
    addr: String,
    city_ix: usize,
    phone: String,
    cuisine: String,
    class: u8,
}

fn gen_restaurant(rng: &mut ChaCha8Rng, used: &mut std::collections::HashSet<String>) -> Restaurant {
    let name = loop {
        let pattern = rng.random_range(0..5u8);
        let candidate = match pattern {
            0 => format!(
                "{} {}",
                ADJECTIVES[rng.random_range(0..ADJECTIVES.len())],
                NOUNS[rng.random_range(0..NOUNS.len())]
            ),
            1 => format!(
                "{}'s {}",
                PERSONS[rng.random_range(0..PERSONS.len())],
                NOUNS[rng.random_range(0..NOUNS.len())]
            ),
            2 => format!("cafe {}", PERSONS[rng.random_range(0..PERSONS.len())]),
            3 => format!(
                "the {} {}",
                ADJECTIVES[rng.random_range(0..ADJECTIVES.len())],
                NOUNS[rng.random_range(0..NOUNS.len())]
            ),
            _ => format!(
                "{} {} {}",
                PERSONS[rng.random_range(0..PERSONS.len())],
                ADJECTIVES[rng.random_range(0..ADJECTIVES.len())],
                NOUNS[rng.random_range(0..NOUNS.len())]
            ),
        };
        if used.insert(candidate.clone()) {
            break candidate;
        }
    };
    let city_ix = rng.random_range(0..CITIES.len());
    Restaurant {
        name,
        addr: format!(
            "{} {}",
            rng.random_range(1..999),
            STREETS[rng.random_range(0..STREETS.len())]
        ),
        city_ix,
        phone: format!(
            "{}/{:03}-{:04}",
            CITIES[city_ix].2,
            rng.random_range(200..999),
            rng.random_range(0..9999)
        ),
        cuisine: CUISINES[rng.random_range(0..CUISINES.len())].to_string(),
        class: rng.random_range(0..5),
    }
}

fn abbreviate_street(addr: &str) -> String {
    addr.replace(" avenue", " ave.")
        .replace(" street", " st.")
        .replace(" boulevard", " blvd.")
        .replace(" road", " rd.")
        .replace(" drive", " dr.")
}

fn cuisine_variant(c: &str) -> String {
    match c {
        "american (new)" => "new american".to_string(),
        "american (traditional)" => "traditional american".to_string(),
        "steakhouses" => "steak house".to_string(),
        "coffee shops" => "coffee".to_string(),
        "bbq" => "barbecue".to_string(),
        other => other.to_string(),
    }
}

/// The right-table rendition of one restaurant: systematic format
/// differences (phone separators, big-city abbreviations) plus random
/// noise, matching how the two source guides differ.
fn corrupt_restaurant(rng: &mut ChaCha8Rng, r: &Restaurant) -> Restaurant {
    let mut name = r.name.clone();
    // token reorder: "cafe rosa" <-> "rosa cafe"
    if rng.random::<f64>() < 0.35 {
        let tokens: Vec<&str> = name.split_whitespace().collect();
        if tokens.len() >= 2 {
            let mut t = tokens.clone();
            t.rotate_left(1);
            name = t.join(" ");
        }
    }
    if rng.random::<f64>() < 0.3 {
        name = name.replace("the ", "");
    }
    if rng.random::<f64>() < 0.25 {
        name = name.replace("'s", "s");
    }
    name = maybe_typos(rng, &name, 0.35);

    let mut addr = r.addr.clone();
    if rng.random::<f64>() < 0.5 {
        addr = abbreviate_street(&addr);
    }
    if rng.random::<f64>() < 0.15 {
        // drop the house number
        addr = addr.splitn(2, ' ').nth(1).unwrap_or(&addr).to_string();
    }
    addr = maybe_typos(rng, &addr, 0.2);

    // the right-side guide always writes dashes and abbreviates big cities
    let mut phone = r.phone.replace('/', "-");
    if rng.random::<f64>() < 0.08 {
        phone = String::new(); // unknown phone
    } else if rng.random::<f64>() < 0.07 {
        // different line (moved, or the listing is stale)
        phone = format!(
            "{}-{:03}-{:04}",
            CITIES[r.city_ix].2,
            rng.random_range(200..999),
            rng.random_range(0..9999)
        );
    }

    let cuisine = if rng.random::<f64>() < 0.35 {
        cuisine_variant(&r.cuisine)
    } else if rng.random::<f64>() < 0.1 {
        String::new()
    } else {
        r.cuisine.clone()
    };

    Restaurant {
        name,
        addr,
        city_ix: r.city_ix,
        phone,
        cuisine,
        class: if rng.random::<f64>() < 0.2 {
            (r.class + 1).min(4)
        } else {
            r.class
        },
    }
}

/// A near-miss sibling: same city and cuisine, one shared name token,
/// different phone and address. Never a gold match.
fn sibling_restaurant(
    rng: &mut ChaCha8Rng,
    r: &Restaurant,
    used: &mut std::collections::HashSet<String>,
) -> Restaurant {
    let first = r.name.split_whitespace().next().unwrap_or("cafe").to_string();
    let name = loop {
        let candidate = format!("{first} {}", NOUNS[rng.random_range(0..NOUNS.len())]);
        if used.insert(candidate.clone()) {
            break candidate;
        }
    };
    Restaurant {
        name,
        addr: format!(
            "{} {}",
            rng.random_range(1..999),
            STREETS[rng.random_range(0..STREETS.len())]
        ),
        city_ix: r.city_ix,
        phone: format!(
            "{}/{:03}-{:04}",
            CITIES[r.city_ix].2,
            rng.random_range(200..999),
            rng.random_range(0..9999)
        ),
        cuisine: r.cuisine.clone(),
        class: r.class,
    }
}

fn restaurant_row(id: &str, r: &Restaurant, right_side: bool) -> String {
    let city = if right_side {
        CITIES[r.city_ix].1
    } else {
        CITIES[r.city_ix].0
    };
    format!(
        "{id},{},{},{},{},{},{}\n",
        csv_cell(&r.name),
        csv_cell(&r.addr),
        city,
        r.phone,
        csv_cell(&r.cuisine),
        r.class
    )
}

/// Restaurants linkage fixture: 533 left rows, 331 right rows, 112 gold
/// matches, 7 columns. The left table also carries hotel-style trap pairs
/// (a cafe and a dining room of the same hotel) whose right-side twin
/// matches only one of them.
pub fn restaurants(seed: u64) -> BenchDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = std::collections::HashSet::new();

    let n_left = 533usize;
    let n_right = 331usize;
    let n_match = 112usize;
    let n_traps = 10usize;
    let n_siblings = 40usize;

    // left entities; the first n_match of them will have right twins
    let mut left: Vec<Restaurant> = (0..n_left - n_traps)
        .map(|_| gen_restaurant(&mut rng, &mut used))
        .collect();

    // hotel traps: entity k gets a "dining room" sibling in the left
    // table sharing the hotel name, city, cuisine; different phone
    for k in 0..n_traps {
        let base = left[k].clone();
        let hotel = base.name.clone();
        left[k].name = format!("{hotel} cafe");
        let mut dining = base.clone();
        dining.name = format!("{hotel} dining room");
        dining.phone = format!(
            "{}/{:03}-{:04}",
            CITIES[base.city_ix].2,
            rng.random_range(200..999),
            rng.random_range(0..9999)
        );
        dining.addr = base.addr.clone();
        left.push(dining);
    }
    assert_eq!(left.len(), n_left);

    // right table: corrupted twins of the first n_match left entities,
    // near-miss siblings of further left entities, then fresh entities
    let mut right: Vec<Restaurant> = Vec::with_capacity(n_right);
    let mut gold: Vec<(String, String)> = Vec::new();
    for k in 0..n_match {
        right.push(corrupt_restaurant(&mut rng, &left[k]));
        gold.push((format!("fd{}", k + 1), format!("zg{}", k + 1)));
    }
    for k in 0..n_siblings {
        right.push(sibling_restaurant(&mut rng, &left[n_match + k], &mut used));
    }
    while right.len() < n_right {
        right.push(gen_restaurant(&mut rng, &mut used));
    }

    // shuffle the right table so match position carries no signal
    let mut order: Vec<usize> = (0..n_right).collect();
    order.shuffle(&mut rng);
    let mut right_ids = vec![String::new(); n_right];
    for (new_pos, &old_pos) in order.iter().enumerate() {
        right_ids[old_pos] = format!("zg{}", new_pos + 1);
    }
    let mut gold_csv = String::from("left_id,right_id\n");
    for k in 0..n_match {
        gold_csv.push_str(&format!("fd{},{}\n", k + 1, right_ids[k]));
    }

    let header = "id,name,addr,city,phone,type,class\n";
    let mut left_csv = String::from(header);
    for (k, r) in left.iter().enumerate() {
        left_csv.push_str(&restaurant_row(&format!("fd{}", k + 1), r, false));
    }
    let mut right_csv = String::from(header);
    for &old_pos in &order {
        right_csv.push_str(&restaurant_row(&right_ids[old_pos], &right[old_pos], true));
    }

    BenchDataset {
        left_csv,
        right_csv,
        gold_csv,
        n_matches: n_match,
    }
}

// ----------------------------------------------------------------- citations

const TITLE_HEAD: &[&str] = &[
    "efficient", "scalable", "adaptive", "incremental", "distributed", "parallel", "approximate",
    "robust", "online", "declarative", "secure", "interactive",
];
const TITLE_TOPIC: &[&str] = &[
    "query processing", "index structures", "transaction management", "stream processing",
    "graph analytics", "similarity joins", "cache coherence", "schema matching",
    "data cleaning", "view maintenance", "entity matching", "log mining", "data integration",
    "skyline queries", "keyword search", "crowdsourcing",
];
const TITLE_DOMAIN: &[&str] = &[
    "relational databases", "sensor networks", "data warehouses", "peer to peer systems",
    "main memory systems", "column stores", "web archives", "social networks",
    "scientific workflows", "spatial data", "xml repositories", "key value stores",
];
const TITLE_TAIL: &[&str] = &[
    "a case study", "an experimental evaluation", "models and algorithms", "theory and practice",
    "a unified approach", "revisited", "made practical", "at scale", "with bounded memory",
    "under uncertainty",
];
const LASTNAMES: &[&str] = &[
    "garcia", "mueller", "tanaka", "kowalski", "rossi", "dubois", "andersen", "novak", "silva",
    "costa", "haugen", "petrov", "yamamoto", "olsen", "martin", "fischer", "weber", "moreau",
    "ricci", "berg", "holm", "keller", "fontaine", "marino", "vogel", "lindqvist", "moretti",
    "dietrich", "soto", "leclerc", "braun", "kimura", "sato", "olivier", "brandt", "castellano",
];
const FIRSTNAMES: &[&str] = &[
    "maria", "johan", "kenji", "anna", "pavel", "lucia", "erik", "sofia", "marco", "ingrid",
    "tomas", "elena", "hiro", "clara", "viktor", "amelie", "oskar", "bianca", "felix", "noor",
];
const VENUES: &[(&str, &str)] = &[
    // (left-side form, right-side form)
    ("sigmod conference", "international conference on management of data"),
    ("vldb", "very large data bases"),
    ("icde", "international conference on data engineering"),
    ("sigmod record", "acm sigmod record"),
    ("vldb journal", "the vldb journal"),
    ("tods", "acm transactions on database systems"),
    ("kdd", "knowledge discovery and data mining"),
    ("cikm", "conference on information and knowledge management"),
];

#[derive(Clone)]
struct Paper {
    title: String,
    authors: Vec<(usize, usize)>, // (firstname ix, lastname ix)
    venue_ix: usize,
    year: u32,
}

fn gen_paper(rng: &mut ChaCha8Rng, used: &mut std::collections::HashSet<String>) -> Paper {
    let title = loop {
        let candidate = format!(
            "{} {} for {} {}",
            TITLE_HEAD[rng.random_range(0..TITLE_HEAD.len())],
            TITLE_TOPIC[rng.random_range(0..TITLE_TOPIC.len())],
            TITLE_DOMAIN[rng.random_range(0..TITLE_DOMAIN.len())],
            TITLE_TAIL[rng.random_range(0..TITLE_TAIL.len())],
        );
        if used.insert(candidate.clone()) {
            break candidate;
        }
    };
    let n_authors = rng.random_range(1..=4usize);
    let authors = (0..n_authors)
        .map(|_| {
            (
                rng.random_range(0..FIRSTNAMES.len()),
                rng.random_range(0..LASTNAMES.len()),
            )
        })
        .collect();
    Paper {
        title,
        authors,
        venue_ix: rng.random_range(0..VENUES.len()),
        year: rng.random_range(1994..2004),
    }
}

fn authors_full(p: &Paper) -> String {
    p.authors
        .iter()
        .map(|&(f, l)| format!("{} {}", FIRSTNAMES[f], LASTNAMES[l]))
        .collect::<Vec<_>>()
        .join(", ")
}

fn authors_initials(p: &Paper) -> String {
    p.authors
        .iter()
        .map(|&(f, l)| {
            format!(
                "{}. {}",
                FIRSTNAMES[f].chars().next().unwrap(),
                LASTNAMES[l]
            )
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Right-side rendition of a paper: initials for author first names,
/// the long venue form, token drops and typos in the title.
fn corrupt_paper(rng: &mut ChaCha8Rng, p: &Paper) -> (String, String, String, String) {
    let mut title_tokens: Vec<String> = p.title.split_whitespace().map(String::from).collect();
    if rng.random::<f64>() < 0.3 && title_tokens.len() > 6 {
        let i = rng.random_range(0..title_tokens.len());
        title_tokens.remove(i);
    }
    if rng.random::<f64>() < 0.12 && title_tokens.len() > 6 {
        title_tokens.truncate(title_tokens.len() - 2);
    }
    let mut title = title_tokens.join(" ");
    title = maybe_typos(rng, &title, 0.3);

    let mut authors = p.clone();
    if rng.random::<f64>() < 0.25 && authors.authors.len() > 1 {
        // drop a trailing co-author
        authors.authors.pop();
    }
    if rng.random::<f64>() < 0.3 && authors.authors.len() > 1 {
        authors.authors.rotate_left(1);
    }
    let author_str = if rng.random::<f64>() < 0.75 {
        authors_initials(&authors)
    } else {
        authors_full(&authors)
    };

    let venue = if rng.random::<f64>() < 0.85 {
        VENUES[p.venue_ix].1.to_string()
    } else {
        VENUES[p.venue_ix].0.to_string()
    };
    let year = if rng.random::<f64>() < 0.04 {
        String::new()
    } else if rng.random::<f64>() < 0.05 {
        format!("{}", p.year + 1)
    } else {
        format!("{}", p.year)
    };
    (title, author_str, venue, year)
}

fn paper_row_left(id: &str, p: &Paper) -> String {
    format!(
        "{id},{},{},{},{}\n",
        csv_cell(&p.title),
        csv_cell(&authors_full(p)),
        csv_cell(VENUES[p.venue_ix].0),
        p.year
    )
}

/// Citation-linkage fixture sizes.
pub struct CitationShape {
    pub n_left: usize,
    pub n_right_extra: usize,
    pub n_match_entities: usize,
    /// Fraction of matched entities receiving 2 and 3 right-side copies;
    /// nonzero values make the right table duplicate-laden.
    pub dup2: f64,
    pub dup3: f64,
}

impl CitationShape {
    /// DBLP-ACM-like: near-bijective matching, clean right table.
    pub fn da() -> CitationShape {
        CitationShape {
            n_left: 2616,
            n_right_extra: 70,
            n_match_entities: 2224,
            dup2: 0.0,
            dup3: 0.0,
        }
    }

    /// DBLP-Scholar-like (desk scale): the right table holds duplicate
    /// entries, so one left row can match several right rows.
    pub fn ds() -> CitationShape {
        CitationShape {
            n_left: 800,
            n_right_extra: 150,
            n_match_entities: 640,
            dup2: 0.30,
            dup3: 0.08,
        }
    }
}

pub fn citations(seed: u64, shape: &CitationShape) -> BenchDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = std::collections::HashSet::new();

    let papers: Vec<Paper> = (0..shape.n_left)
        .map(|_| gen_paper(&mut rng, &mut used))
        .collect();

    let header = "id,title,authors,venue,year\n";
    let mut left_csv = String::from(header);
    for (k, p) in papers.iter().enumerate() {
        left_csv.push_str(&paper_row_left(&format!("dblp{}", k + 1), p));
    }

    // right rows: corrupted copies of matched entities (1-3 each), plus
    // fresh unmatched papers
    let mut right_rows: Vec<(usize, (String, String, String, String))> = Vec::new();
    for k in 0..shape.n_match_entities {
        let copies = {
            let u = rng.random::<f64>();
            if u < shape.dup3 {
                3
            } else if u < shape.dup3 + shape.dup2 {
                2
            } else {
                1
            }
        };
        for _ in 0..copies {
            right_rows.push((k, corrupt_paper(&mut rng, &papers[k])));
        }
    }
    for _ in 0..shape.n_right_extra {
        let p = gen_paper(&mut rng, &mut used);
        let rendered = (
            p.title.clone(),
            if rng.random::<f64>() < 0.75 {
                authors_initials(&p)
            } else {
                authors_full(&p)
            },
            VENUES[p.venue_ix].1.to_string(),
            format!("{}", p.year),
        );
        right_rows.push((usize::MAX, rendered));
    }

    let mut order: Vec<usize> = (0..right_rows.len()).collect();
    order.shuffle(&mut rng);

    let mut right_csv = String::from(header);
    let mut gold_csv = String::from("left_id,right_id\n");
    let mut n_matches = 0usize;
    for (new_pos, &old_pos) in order.iter().enumerate() {
        let (entity, (title, authors, venue, year)) = &right_rows[old_pos];
        let rid = format!("acm{}", new_pos + 1);
        right_csv.push_str(&format!(
            "{rid},{},{},{},{}\n",
            csv_cell(title),
            csv_cell(authors),
            csv_cell(venue),
            year
        ));
        if *entity != usize::MAX {
            gold_csv.push_str(&format!("dblp{},{rid}\n", entity + 1));
            n_matches += 1;
        }
    }

    BenchDataset {
        left_csv,
        right_csv,
        gold_csv,
        n_matches,
    }
}
