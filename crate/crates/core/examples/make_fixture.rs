//! Regenerates the synthetic fixture corpus under `fixtures/synthetic/`.
//!
//! ```text
//! cargo run --example make_fixture [-- <out-dir>]
//! ```
//!
//! The corpus has 24 dialogues over hotel, restaurant, train, attraction
//! and taxi, with states that grow turn by turn. Its expected evaluation
//! follows from how each dialogue is built, not from running the pipeline:
//!
//! - hotel dialogues 6 and 7 track a different area than their goal, so the
//!   offered hotel never matches the goal (Inform and Success fail)
//! - restaurant dialogue 5 never names a restaurant (Inform and Success fail)
//! - hotel dialogues 3, 4 and 5 never give the requested phone number
//!   (Success fails)
//!
//! Everything else informs and succeeds, so Inform = 21/24 and
//! Success = 18/24. Replaying the gold responses gives BLEU 100.

use std::fs;
use std::path::PathBuf;

use serde_json::{json, Value};

const AREAS: [&str; 5] = ["north", "south", "east", "west", "centre"];
const PRICES: [&str; 3] = ["cheap", "moderate", "expensive"];
const DAYS: [&str; 7] = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
const FOODS: [&str; 6] = ["indian", "italian", "chinese", "thai", "british", "modern european"];
const STATIONS: [&str; 5] = ["cambridge", "london kings cross", "ely", "norwich", "stansted airport"];
const SIGHTS: [&str; 4] = ["museum", "park", "college", "theatre"];

const HOTEL_NAMES: [&str; 12] = [
    "acorn guest house", "alpha milton", "arbury lodge", "ashley hotel", "avalon", "bridge guest house",
    "carolina bed and breakfast", "city centre north", "el shaddai", "finches", "gonville hotel", "hamilton lodge",
];
const RESTAURANT_NAMES: [&str; 12] = [
    "curry garden", "pizza hut city centre", "golden house", "sala thong", "the oak bistro", "restaurant one seven",
    "saffron brasserie", "da vinci pizzeria", "charlie chan", "bangkok city", "cotto", "midsummer house",
];
const ATTRACTION_NAMES: [&str; 8] = [
    "fitzwilliam museum", "cherry hinton water play", "christ 's college", "adc theatre",
    "kettle 's yard", "milton country park", "king 's college", "mumford theatre",
];

const HOTEL_DIALOGUES: usize = 8;
const RESTAURANT_DIALOGUES: usize = 6;
const TRAIN_DIALOGUES: usize = 6;
const ATTRACTION_DIALOGUES: usize = 4;

fn hotel_db() -> Vec<Value> {
    (0..12)
        .map(|i| {
            json!({
                "name": HOTEL_NAMES[i],
                "type": if i % 3 == 0 { "guesthouse" } else { "hotel" },
                "area": AREAS[i % 5],
                "pricerange": PRICES[i % 3],
                "stars": (2 + i % 4).to_string(),
                "parking": if i % 2 == 0 { "yes" } else { "no" },
                "internet": "yes",
                "phone": format!("012233{:05}", 1000 + 37 * i),
                "address": format!("{} {} road", 10 + i, ["mill", "hills", "trumpington", "newmarket"][i % 4]),
                "postcode": format!("cb{}{}aa", 1 + i % 4, i),
            })
        })
        .collect()
}

fn restaurant_db() -> Vec<Value> {
    (0..12)
        .map(|i| {
            json!({
                "name": RESTAURANT_NAMES[i],
                "food": FOODS[i % 6],
                "area": AREAS[i % 5],
                "pricerange": PRICES[(i + 1) % 3],
                "phone": format!("012233{:05}", 5000 + 41 * i),
                "address": format!("{} regent street", 2 * i + 1),
                "postcode": format!("cb2{}dp", i),
            })
        })
        .collect()
}

/// Departure, destination and day of train `i`.
fn train_route(i: usize) -> (&'static str, &'static str, &'static str) {
    let from = STATIONS[i % 5];
    let to = if i.is_multiple_of(5) { STATIONS[1 + i % 4] } else { STATIONS[0] };
    (from, to, DAYS[i % 7])
}

fn train_db() -> Vec<Value> {
    (0..10)
        .map(|i| {
            let (from, to, day) = train_route(i);
            json!({
                "id": format!("tr{}", 1000 + 137 * i),
                "departure": from,
                "destination": to,
                "day": day,
                "leave": format!("{:02}:{:02}", 5 + i, (11 * i) % 60),
                "arrive": format!("{:02}:{:02}", 6 + i, (11 * i + 7) % 60),
                "price": format!("{}.{}0 pounds", 4 + i, i % 10),
                "duration": format!("{} minutes", 17 + 5 * i),
            })
        })
        .collect()
}

fn attraction_db() -> Vec<Value> {
    (0..8)
        .map(|i| {
            json!({
                "name": ATTRACTION_NAMES[i],
                "type": SIGHTS[i % 4],
                "area": AREAS[i % 5],
                "phone": format!("012233{:05}", 8000 + 29 * i),
                "postcode": format!("cb{}{}bu", 1 + i % 3, i),
                "price": if i % 2 == 0 { "free".to_string() } else { format!("{} pounds", 3 + i) },
            })
        })
        .collect()
}

fn field<'a>(row: &'a Value, key: &str) -> &'a str {
    row[key].as_str().expect("fixture fields are strings")
}

struct Builder {
    turns: Vec<Value>,
    state: Vec<[String; 3]>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            turns: Vec::new(),
            state: Vec::new(),
        }
    }

    fn set(&mut self, domain: &str, slot: &str, value: &str) {
        match self.state.iter_mut().find(|t| t[0] == domain && t[1] == slot) {
            Some(t) => t[2] = value.to_string(),
            None => self.state.push([domain.into(), slot.into(), value.into()]),
        }
    }

    fn turn(&mut self, user: &str, system: &str, outcome: Option<&str>) {
        let mut t = json!({"user": user, "system": system, "state": self.state});
        if let Some(o) = outcome {
            t["book_outcome"] = json!(o);
        }
        self.turns.push(t);
    }
}

fn hotel_dialogue(k: usize, db: &[Value]) -> Value {
    let e = &db[k];
    let (kind, area, price) = (field(e, "type"), field(e, "area"), field(e, "pricerange"));
    let people = (2 + k % 3).to_string();
    let day = DAYS[k % 7];
    let stay = (1 + k % 4).to_string();
    let mut b = Builder::new();
    b.set("hotel", "type", kind);
    b.set("hotel", "area", area);
    b.turn(
        &format!("i am looking for a {kind} in the {area} of town ."),
        "there are [value_choice] [value_type] options in the [value_area] . do you have a price range in mind ?",
        None,
    );
    b.set("hotel", "pricerange", price);
    b.turn(
        &format!("something in the {price} price range please ."),
        "[value_name] is a [value_stars] star [value_type] in the [value_area] . shall i book it ?",
        None,
    );
    b.set("hotel", "people", &people);
    b.set("hotel", "day", day);
    b.set("hotel", "stay", &stay);
    b.turn(
        &format!("yes , book it for {people} people for {stay} nights starting {day} ."),
        "booking was successful . reference number is : [value_reference] .",
        Some("success"),
    );
    let phone_reply = if (3..6).contains(&k) {
        "i am sorry , i do not have that information ."
    } else {
        "the phone number is [value_phone] ."
    };
    b.turn("can i have their phone number ?", phone_reply, None);
    b.turn("that is all , thank you .", "you are welcome . have a great day .", None);

    let goal_area = if k >= 6 { AREAS[(k + 2) % 5] } else { area };
    json!({
        "id": format!("syn-hotel-{k:02}"),
        "goal": {
            "constraints": [
                ["hotel", "type", kind], ["hotel", "area", goal_area], ["hotel", "pricerange", price],
                ["hotel", "people", people], ["hotel", "day", day], ["hotel", "stay", stay]
            ],
            "requestables": {"hotel": ["phone"]},
            "booking_required": ["hotel"]
        },
        "turns": b.turns
    })
}

fn restaurant_dialogue(k: usize, db: &[Value]) -> Value {
    let e = &db[k];
    let (food, area) = (field(e, "food"), field(e, "area"));
    let decoy = FOODS[(k + 1) % 6];
    let silent = k == 5;
    let mut b = Builder::new();
    b.set("restaurant", "food", decoy);
    b.turn(
        &format!("i would like some {decoy} food ."),
        "what part of town would you like ?",
        None,
    );
    b.set("restaurant", "area", area);
    b.set("restaurant", "pricerange", "dontcare");
    b.turn(
        &format!("the {area} , and i do not care about the price ."),
        "there are [value_choice] [value_food] restaurants in the [value_area] .",
        None,
    );
    b.set("restaurant", "food", food);
    let offer = if silent {
        "there are [value_choice] [value_food] places in the [value_area] . any other preference ?"
    } else {
        "[value_name] serves [value_food] food in the [value_area] ."
    };
    b.turn(&format!("sorry , i meant {food} food ."), offer, None);
    b.turn(
        "could i get the address and postcode ?",
        "the address is [value_address] , postcode [value_postcode] .",
        None,
    );
    b.turn("thanks , goodbye .", "thank you for using our service . goodbye .", None);
    json!({
        "id": format!("syn-restaurant-{k:02}"),
        "goal": {
            "constraints": [["restaurant", "food", food], ["restaurant", "area", area], ["restaurant", "pricerange", "dontcare"]],
            "requestables": {"restaurant": ["address", "postcode"]}
        },
        "turns": b.turns
    })
}

fn train_dialogue(k: usize, db: &[Value]) -> Value {
    let (from, to, day) = train_route(k);
    let leave = field(&db[k], "leave");
    let people = (1 + k % 4).to_string();
    let mut b = Builder::new();
    b.set("train", "destination", to);
    b.set("train", "departure", from);
    b.turn(
        &format!("i need a train from {from} to {to} ."),
        "what day will you be travelling ?",
        None,
    );
    b.set("train", "day", day);
    b.set("train", "leave", leave);
    b.turn(
        &format!("on {day} , leaving after {leave} ."),
        "[value_id] leaves at [value_leave] and arrives at [value_arrive] . would you like a booking ?",
        None,
    );
    b.set("train", "people", &people);
    b.turn(
        &format!("yes please , {people} tickets ."),
        "booked ! the fare is [value_price] and your reference number is [value_reference] .",
        Some("success"),
    );
    b.turn("great , that is everything .", "have a nice trip .", None);
    json!({
        "id": format!("syn-train-{k:02}"),
        "goal": {
            "constraints": [
                ["train", "destination", to], ["train", "departure", from], ["train", "day", day],
                ["train", "leave", leave], ["train", "people", people]
            ],
            "requestables": {"train": ["price"]},
            "booking_required": ["train"]
        },
        "turns": b.turns
    })
}

fn attraction_dialogue(k: usize, db: &[Value]) -> Value {
    let e = &db[k];
    let (kind, area, name) = (field(e, "type"), field(e, "area"), field(e, "name"));
    let leave = format!("{}:15", 14 + k);
    let mut b = Builder::new();
    b.set("attraction", "type", kind);
    b.set("attraction", "area", area);
    b.turn(
        &format!("is there a {kind} in the {area} ?"),
        "[value_name] is a [value_type] in the [value_area] .",
        None,
    );
    b.turn("what is the entrance fee ?", "the entrance fee is [value_price] .", None);
    b.set("taxi", "destination", name);
    b.set("taxi", "leave", &leave);
    b.turn(
        &format!("i also need a taxi to {name} leaving at {leave} ."),
        "a [value_car] will pick you up . the contact number is [value_phone] .",
        None,
    );
    b.turn("perfect , bye .", "enjoy your visit . goodbye .", None);
    json!({
        "id": format!("syn-attraction-{k:02}"),
        "goal": {
            "constraints": [
                ["attraction", "type", kind], ["attraction", "area", area],
                ["taxi", "destination", name], ["taxi", "leave", leave]
            ],
            "requestables": {"attraction": ["price"], "taxi": ["car", "phone"]}
        },
        "turns": b.turns
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic"));
    fs::create_dir_all(out.join("kb"))?;

    let hotels = hotel_db();
    let restaurants = restaurant_db();
    let trains = train_db();
    let attractions = attraction_db();

    let mut dialogues = Vec::new();
    dialogues.extend((0..HOTEL_DIALOGUES).map(|k| hotel_dialogue(k, &hotels)));
    dialogues.extend((0..RESTAURANT_DIALOGUES).map(|k| restaurant_dialogue(k, &restaurants)));
    dialogues.extend((0..TRAIN_DIALOGUES).map(|k| train_dialogue(k, &trains)));
    dialogues.extend((0..ATTRACTION_DIALOGUES).map(|k| attraction_dialogue(k, &attractions)));

    // Round-trip through the corpus model so the file is in canonical form.
    let raw = json!({"schema": mintl::corpus::multiwoz_schema(), "dialogues": dialogues});
    let corpus = mintl::corpus::Corpus::from_json(&raw.to_string())?;
    fs::write(out.join("corpus.json"), corpus.to_json() + "\n")?;

    for (name, rows) in [
        ("hotel", &hotels),
        ("restaurant", &restaurants),
        ("train", &trains),
        ("attraction", &attractions),
    ] {
        fs::write(out.join(format!("kb/{name}_db.json")), serde_json::to_string_pretty(rows)? + "\n")?;
    }

    let n = corpus.dialogues.len() as f64;
    let inform = 100.0 * 21.0 / n;
    let success = 100.0 * 18.0 / n;
    let eval = json!({
        "joint_acc": 1.0,
        "inform": inform,
        "success": success,
        "bleu": 100.0,
        "combined": mintl::metrics::combined_score(inform, success, 100.0),
    });
    fs::write(out.join("gold_eval.json"), serde_json::to_string_pretty(&eval)? + "\n")?;
    println!("wrote {} dialogues, {} turns to {}", corpus.dialogues.len(), corpus.turn_count(), out.display());
    Ok(())
}
