//! Source of truth for `fixtures/goals.json` and
//! `fixtures/scripts/conforming.json`.
//!
//! Every goal gets a scripted assistant that behaves exactly as its level
//! prescribes and a scripted driver that accepts and then signals done. Rules
//! are keyed on text unique to each goal, so the script is a pure function of
//! the request and safe to share between concurrent dialogues.

#![allow(dead_code)]

use proactiva_core::level::ProactivityLevel;
use proactiva_core::llm::{Reply, Rule, Script};
use proactiva_core::react::{initiation_question, REACT_MARKER, REFLECT_MARKER};
use proactiva_core::rewriter::REWRITE_MARKER;
use proactiva_core::simulator::{SimulatedUserGoal, SIMULATOR_MARKER};

pub struct Case {
    pub id: &'static str,
    /// Driver opening for levels 1-3, situation for levels 4-5.
    pub prompt: &'static str,
    pub goal: &'static str,
    pub keyword: &'static str,
    pub search: &'static str,
    pub answer: &'static str,
    /// Assistant reply after the driver accepts (levels 2 and 4).
    pub follow_up: &'static str,
}

const fn case(
    id: &'static str,
    prompt: &'static str,
    goal: &'static str,
    keyword: &'static str,
    search: &'static str,
    answer: &'static str,
    follow_up: &'static str,
) -> Case {
    Case { id, prompt, goal, keyword, search, answer, follow_up }
}

pub const CASES: [Case; 50] = [
    case("l1-01", "Adjust the brightness of the head-up display.", "Raise the head-up display brightness.", "head-up display", "adjust head-up display brightness", "Sure, I will adjust the brightness of the head-up display.", ""),
    case("l1-02", "I want to listen to a piece of pop music.", "Hear some pop music.", "pop", "play pop music", "Sure, I'm playing a piece of pop music for you.", ""),
    case("l1-03", "Could you help me turn on the fog lights?", "Fog lights switched on.", "fog lights", "turn on the fog lights", "Sure, the fog lights are now on.", ""),
    case("l1-04", "Hi, open the sunroof.", "Sunroof opened.", "sunroof", "open the sunroof", "Sure, I will open the sunroof.", ""),
    case("l1-05", "Activate the rearward safety alert.", "Rearward safety alert active.", "rearward safety alert", "activate rearward safety alert", "Sure, the rearward safety alert has been activated.", ""),
    case("l1-06", "Adjust the position of the inner rearview mirror.", "Inner mirror repositioned.", "rearview mirror", "adjust inner rearview mirror position", "Sure, I will adjust the inner rearview mirror.", ""),
    case("l1-07", "Hi, close the car window.", "Car window closed.", "window", "close the car window", "Sure, I will close the car window.", ""),
    case("l1-08", "Can you enable the parking assist system?", "Parking assist enabled.", "parking assist", "enable parking assist system", "Sure, the parking assist system is now enabled.", ""),
    case("l1-09", "Turn on the external rearview mirror heating.", "Mirror heating on.", "mirror heating", "external rearview mirror heating", "Sure, I will turn on the external rearview mirror heating.", ""),
    case("l1-10", "Adjust the seat position for me.", "Seat moved to a comfortable position.", "seat", "adjust the seat position", "Sure, I will adjust the seat position for you.", ""),
    case("l2-01", "I feel very hungry.", "Get a nearby restaurant suggestion.", "restaurant", "recommend nearby restaurants", "Shall I recommend some nearby restaurants for you?", "Done. Old Mill Bistro is the closest restaurant, 7 minutes away."),
    case("l2-02", "The weather has become foggy.", "Better visibility in fog.", "fog lights", "turn on the fog lights", "Shall I turn on the fog lights for you?", "Done. The fog lights are on."),
    case("l2-03", "There are raindrops outside the car.", "Clear view in the rain.", "wiper", "turn on the windshield wipers", "Shall I turn on the windshield wipers for you?", "Done. The wipers are on in intermittent mode."),
    case("l2-04", "I'm feeling a bit tired.", "Find somewhere to rest.", "rest area", "navigate to the nearest rest area", "Shall I navigate to the nearest rest area for you?", "Done. Lakeside Rest Area is 12 minutes away."),
    case("l2-05", "The road surface looks very slippery.", "Safer grip on a slippery road.", "traction control", "set traction control to snow mode", "Would you like me to set the traction control to snow mode?", "Done. The traction control is in snow mode."),
    case("l2-06", "I feel the car is driving a bit bumpy.", "A smoother ride.", "suspension", "switch suspension to comfort mode", "Shall I switch the suspension to comfort mode for you?", "Done. The suspension is in comfort mode."),
    case("l2-07", "The driver's seat is a bit damp.", "Dry the driver's seat.", "seat ventilation", "turn on the seat ventilation", "Shall I turn on the seat ventilation to dry it for you?", "Done. The seat ventilation is on."),
    case("l2-08", "I want to have a rest.", "Relax in the car.", "seat", "recline the driver seat to rest position", "Shall I recline your seat to the rest position for you?", "Done. Your seat is in the rest position."),
    case("l2-09", "The interior temperature of the car is too high.", "Cool down the cabin.", "air conditioning", "turn on the air conditioning", "Shall I activate the air conditioning for you?", "Done. The air conditioning is cooling to 22 Celsius."),
    case("l2-10", "There is dust outside the car window.", "Keep the dust out.", "air circulation", "switch to internal air circulation", "Shall I close the windows and switch to internal air circulation for you?", "Done. The windows are closed and the air is recirculating."),
    case("l3-01", "The seat is a bit loose.", "A firmer seat.", "seat", "tighten the seat side bolsters", "I will tighten the seat side bolsters for you. Is the current firmness okay?", ""),
    case("l3-02", "There's quite a strong wind outside the car.", "Less wind in the cabin.", "window", "close the windows and sunroof", "I will close the windows and the sunroof for you.", ""),
    case("l3-03", "Pedestrians are crossing the road ahead.", "Pass the crossing safely.", "pedestrians", "pedestrians crossing the road ahead", "I'm slowing down and keeping a safe distance from the pedestrians ahead.", ""),
    case("l3-04", "The interior of the car has a somewhat pungent odor.", "Fresh cabin air.", "air purifier", "turn on the air purifier", "I will turn on the air purifier and switch to fresh air for you. Is fan level 3 okay?", ""),
    case("l3-05", "I feel the cold of the night.", "A warmer cabin.", "heating", "turn on the heating", "I will turn on the heating for you. How about 26 degrees Celsius?", ""),
    case("l3-06", "There is some traffic congestion on the road.", "Avoid the congestion.", "route", "find a detour around the congestion", "I will take a faster route along the Harbor Road detour for you, which saves 9 minutes. Okay?", ""),
    case("l3-07", "The rearview mirror is blurred by rain.", "Clear mirrors.", "mirror heating", "turn on the external rearview mirror heating", "I will turn on the rearview mirror heating for you to clear the rain.", ""),
    case("l3-08", "I can't see the vehicles ahead clearly.", "Better forward visibility.", "fog lights", "turn on the fog lights", "I will turn on the fog lights for you. Shall I also slow down a little?", ""),
    case("l3-09", "The sandstorm is too strong.", "Keep sand out of the cabin.", "air circulation", "close windows and internal air circulation", "I will close the windows and switch to internal air circulation for you.", ""),
    case("l3-10", "I can't see the vehicles behind me.", "See what is behind.", "rear camera", "show the rear camera view", "I will show the rear camera view on the display for you.", ""),
    case("l4-01", "The car has just entered the highway.", "Stay informed about highway traffic.", "traffic information", "highway traffic information", "You have entered the highway. Do you need me to turn on the high-speed traffic information for you?", "Okay, the high-speed traffic information is on."),
    case("l4-02", "The inside of the windows has fogged up.", "Clear the fogged windows.", "defogger", "turn on the window defogger", "The vehicle's windows are foggy. Do you need me to turn on the window defogger for you?", "Okay, the window defogger is on."),
    case("l4-03", "It is 6 pm and the driver has not eaten.", "Find a place for dinner.", "restaurant", "recommend nearby restaurants for dinner", "It's dinner time. Do you need me to recommend nearby restaurants for you?", "Okay, Old Mill Bistro is 7 minutes away and has a quiet table."),
    case("l4-04", "A weekday morning; the driver has just started the car.", "Get to work on time.", "commute route", "plan the commute route to the office", "Good morning, would you like me to help you plan your commute route?", "Okay, your commute route to the office takes 22 minutes."),
    case("l4-05", "The driver has been driving for over two hours.", "Stay alert on a long drive.", "break", "break reminder and eye-care navigation", "You've been driving for quite a while. Would you like to take a break or enable the eye-care navigation feature?", "Okay, I will guide you to Lakeside Rest Area for a break."),
    case("l4-06", "The windows have fogged up in cold weather.", "Clear the fogged windows.", "windows", "open the windows to clear fog", "The vehicle windows are foggy. Would you like me to open the windows to clear the fog for you?", "Okay, the windows are slightly open to clear the fog."),
    case("l4-07", "It is Saturday and the driver likes scenic drives.", "Enjoy a weekend drive.", "scenic route", "scenic route to a tourist destination", "Based on your driving preferences, I can recommend a scenic route to a tourist destination. Are you interested?", "Okay, the scenic route to Pine Ridge Lookout takes 58 minutes."),
    case("l4-08", "The cabin has been silent for a while.", "Some entertainment.", "music", "play music or tune the radio", "Do you want me to play music for you or tune in to the radio?", "Okay, playing your pop music playlist."),
    case("l4-09", "Monday morning; the driver is setting off from home.", "Get to work on time.", "commute route", "plan the commute route to the office", "Good morning, would you like me to help you plan your commute route?", "Okay, your commute route to the office takes 22 minutes."),
    case("l4-10", "The driver has just sat down in the car.", "A comfortable seat.", "seat", "adjust the seat to the memory position", "You're in the car now. Would you like assistance in adjusting the seat position?", "Okay, your seat is in memory position 1."),
    case("l5-01", "The route ahead enters a high-forest area.", "Good airflow in the forest.", "ventilation", "open ventilation for the forest area", "You'll be driving to a high-forest area. I'm helping to open the ventilation to ensure proper airflow in the car.", ""),
    case("l5-02", "Today's forecast is hot.", "A comfortable cabin temperature.", "25 degrees", "preferred cabin temperature", "The weather forecast indicates it will be hot today. I recommend adjusting the car's interior temperature to 25 degrees Celsius for a comfortable journey.", ""),
    case("l5-03", "Congestion has been detected on the current route.", "Avoid the congestion.", "shorter route", "find a shorter route around congestion", "I apologize, but based on my monitoring, your current driving route is encountering traffic congestion. I will find a shorter route for you.", ""),
    case("l5-04", "The driver switched on nighttime driving mode.", "Comfortable lighting at night.", "lighting", "night driving interior lighting", "You've activated the nighttime driving mode. I will adjust the interior lighting and dashboard brightness to the optimal settings.", ""),
    case("l5-05", "The driver started the car and the radio is off.", "Hear the favorite channel.", "radio", "favorite radio channel", "According to your preferences, I've adjusted the radio to your favorite music channel.", ""),
    case("l5-06", "The driver sat down on a warm afternoon.", "A comfortable temperature.", "air conditioning", "preferred air conditioning temperature", "According to your seating preferences, I've adjusted the air conditioning temperature to your commonly preferred comfort level.", ""),
    case("l5-07", "Light rain is falling nearby while a window is open.", "Keep rain out.", "window", "limit window opening in rain", "Considering the nearby weather conditions, I've limited the window opening to a certain range to prevent rainwater from entering the car.", ""),
    case("l5-08", "The route ahead enters a rainy area.", "Keep rain out.", "windows", "close the car windows for rain", "You're heading to an area with rain. I'm assisting in closing the car windows for you.", ""),
    case("l5-09", "The car is entering a safe driving zone.", "Drive efficiently.", "energy-saving", "switch to energy-saving mode", "You are entering a safe driving zone. I suggest adjusting your vehicle to the energy-saving mode to reduce fuel consumption and emissions.", ""),
    case("l5-10", "The battery is almost empty.", "Reach a charger in time.", "charging stations", "nearby charging stations", "The battery is about to run out. I will plan the locations of nearby charging stations for you.", ""),
];

impl Case {
    pub fn level(&self) -> ProactivityLevel {
        let n = self.id.as_bytes()[1] - b'0';
        ProactivityLevel::new(n.into()).expect("ids encode a valid level")
    }

    pub fn goal(&self) -> SimulatedUserGoal {
        let level = self.level();
        let (opening_utterance, initiation_event) = if level.assistant_initiates() {
            (None, Some(self.prompt.to_string()))
        } else {
            (Some(self.prompt.to_string()), None)
        };
        SimulatedUserGoal {
            id: self.id.to_string(),
            level,
            opening_utterance,
            initiation_event,
            goal_description: self.goal.to_string(),
            success_keywords: vec![self.keyword.to_string()],
            max_turns: 6,
        }
    }

    fn first_question(&self) -> String {
        if self.level().assistant_initiates() {
            initiation_question(self.prompt)
        } else {
            self.prompt.to_string()
        }
    }

    /// (driver reply, assistant answer) pairs after the opening exchange,
    /// then the closing driver line.
    fn script(&self) -> (Vec<(&'static str, &'static str)>, &'static str) {
        match self.level().value() {
            1 => (vec![], "[DONE]"),
            2 => (vec![("Go ahead.", self.follow_up)], "Thanks. [DONE]"),
            3 => (vec![], "Sounds good. Thanks [DONE]"),
            4 => (vec![("Yes, please.", self.follow_up)], "[DONE]"),
            _ => (vec![], "Okay, thanks. [DONE]"),
        }
    }
}

fn react(reply: String) -> Rule {
    Rule::new(Reply::Text(reply)).system(REACT_MARKER)
}

pub fn goals() -> Vec<SimulatedUserGoal> {
    CASES.iter().map(Case::goal).collect()
}

pub fn script() -> Script {
    let mut later = Vec::new();
    let mut opening = Vec::new();
    let mut driver = Vec::new();
    for c in &CASES {
        let key = format!("Question: {}\n", c.first_question());
        opening.push(
            react(format!("Thought: I have what I need.\nFinal Answer: {}", c.answer))
                .contains(key.clone())
                .contains("Action: search["),
        );
        opening.push(
            react(format!("Thought: I should look up the relevant vehicle data.\nAction: search[{}]", c.search))
                .contains(key.clone())
                .contains("Action: get_proactivity_strategy["),
        );
        opening.push(
            react(format!(
                "Thought: I should check how proactive to be.\nAction: get_proactivity_strategy[{}]",
                c.level()
            ))
            .contains(key),
        );
        let (exchanges, closing) = c.script();
        let mut previous = c.answer;
        // The driver prompt holds the whole conversation, so the rule for
        // the latest assistant line has to win over earlier ones.
        let mut lines = Vec::new();
        for (reply, answer) in exchanges {
            lines.push(
                Rule::new(Reply::text(reply))
                    .system(SIMULATOR_MARKER)
                    .contains(format!("IVCA: {previous}\nDriver:")),
            );
            later.push(
                react(format!("Thought: The driver agreed.\nFinal Answer: {answer}"))
                    .contains(format!("IVCA: {previous}\n"))
                    .contains(format!("Question: {reply}\n")),
            );
            previous = answer;
        }
        lines.push(
            Rule::new(Reply::text(closing))
                .system(SIMULATOR_MARKER)
                .contains(format!("IVCA: {previous}\nDriver:")),
        );
        driver.extend(lines.into_iter().rev());
    }
    let mut rules = vec![
        Rule::new(Reply::EchoAfter("Input: ".into())).system(REWRITE_MARKER),
        Rule::new(Reply::text("YES")).system(REFLECT_MARKER),
    ];
    for rule in later.into_iter().chain(opening).chain(driver) {
        if !rules.contains(&rule) {
            rules.push(rule);
        }
    }
    Script::Matcher { rules }
}

pub fn goals_json() -> String {
    let mut s = serde_json::to_string_pretty(&goals()).expect("goals serialize");
    s.push('\n');
    s
}

pub fn script_json() -> String {
    let mut s = script().to_json_string();
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}
