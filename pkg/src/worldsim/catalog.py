"""The prompt template catalog.

One entry per kind of generated text the simulation needs. Template bodies
are plain guidance text; with the scripted backend only template_id and the
slot values matter, so bodies stay short.
"""

from __future__ import annotations

from .oracle import (FREE_TEXT, JSON_OBJECT, PromptTemplate, choice, score)


def _t(template_id, slots, body, schema=FREE_TEXT):
    return PromptTemplate(template_id, tuple(slots), body, schema)


TEMPLATES: dict[str, PromptTemplate] = {t.template_id: t for t in [
    # world building
    _t("biome_analogy", ["world", "biome"],
       "In a world described as '{world}', give a short evocative name for "
       "the region that plays the role of a {biome}."),
    _t("flora_analogy", ["world", "descriptor"],
       "In a world described as '{world}', what object plays the role of a "
       "'{descriptor}'? Answer with a short description."),
    _t("building_analogy", ["world", "function"],
       "In a world described as '{world}', describe the appearance of a "
       "building serving as a {function}."),
    _t("furniture_analogy", ["world", "descriptor"],
       "In a world described as '{world}', restyle this furniture item: "
       "{descriptor}."),
    _t("size_estimate", ["description"],
       "Estimate the size in map tiles of: {description}. Answer with a "
       "single number.", score(1, 10000)),

    # population
    _t("workplace_roles", ["world"],
       "List occupations that fit a world described as '{world}'. Answer as "
       'JSON: {"roles": ["..."]}.', JSON_OBJECT),
    _t("family_lore", ["world", "surname", "members"],
       "Write the background lore of the {surname} family ({members}) living "
       "in a world described as '{world}'."),
    _t("member_profile", ["world", "surname", "name", "role"],
       "Profile {name}, a {role} of the {surname} family, in a world "
       'described as \'{world}\'. JSON: {"lore": "...", "traits": ["..."]}.',
       JSON_OBJECT),
    _t("seed_memory_family", ["name", "other", "surname"],
       "Write a short first-person memory {name} has of {other}, grounded in "
       "their shared {surname} family history."),
    _t("seed_memory_work", ["name", "other", "workplace"],
       "Write a short first-person memory {name} has of {other} from working "
       "together at {workplace}."),
    _t("seed_memory_acquaintance", ["name", "other", "commonality"],
       "Write a short first-person memory {name} has of meeting {other}; "
       "they share: {commonality}."),

    # agent runtime
    _t("daily_routine", ["name", "lore", "traits", "day", "locations"],
       "Plan {name}'s day {day} as JSON entries with start, end, location, "
       'activity: {"entries": [...]}. Available locations: {locations}.',
       JSON_OBJECT),
    _t("reaction", ["name", "observation"],
       "{name} observes: {observation}. Choose one.",
       choice("continue", "deviate", "converse")),
    _t("conversation_outline", ["participants", "context", "memories"],
       "Outline a conversation among {participants}. Context: {context}. "
       "Relevant memories: {memories}."),
    _t("utterance", ["name", "outline", "transcript", "memories"],
       "Write {name}'s next line. Outline: {outline}. So far: {transcript}. "
       "Memories: {memories}."),
    _t("proposal_detect", ["utterance"],
       "Does this line propose a joint future plan? '{utterance}'",
       choice("yes", "no")),
    _t("proposal_details", ["utterance", "participants"],
       "Extract the proposed plan from '{utterance}' (participants "
       '{participants}) as JSON: {"activity", "day_offset", "start", "end", '
       '"location"}.', JSON_OBJECT),
    _t("plan_decision", ["name", "activity", "traits", "memories"],
       "Does {name} (traits: {traits}) accept the plan '{activity}'? "
       "Memories: {memories}.", choice("accept", "reject")),
    _t("dialogue_end", ["transcript"],
       "Should this conversation end now? {transcript}",
       choice("end", "continue")),
    _t("conversation_summary", ["name", "transcript"],
       "Summarize this conversation in first person as {name}: {transcript}"),

    # reflection
    _t("reflection_insight", ["name", "day_log"],
       "As {name}, draw one high-level insight from today: {day_log}"),
    _t("reflection_importance", ["insight"],
       "Rate the personal importance of this insight from 0 to 1: {insight}",
       score(0, 1)),
    _t("trait_evolution", ["name", "traits", "insight"],
       "Given {name}'s traits {traits} and today's insight '{insight}', "
       'suggest at most one change. JSON: {"add": null|"...", '
       '"remove": null|"..."}.', JSON_OBJECT),
    _t("plan_reconsider", ["name", "activity"],
       "Will {name} still attend '{activity}'?", choice("attend", "withdraw")),

    # player commands
    _t("command_parse", ["command", "npcs", "locations"],
       "Decompose the player command '{command}' into actionable steps. "
       "Known NPCs: {npcs}. Known locations: {locations}. "
       'JSON: {"steps": [...]}.', JSON_OBJECT),
    _t("interview_answer", ["name", "question", "memories", "profile"],
       "Answer as {name} ({profile}). Question: {question}. "
       "Memories: {memories}."),
]}


# conservative per-template defaults: every choice picks the non-branching
# option, every JSON response is minimal but schema-valid
DEFAULT_RESPONSES: dict[str, str] = {
    "biome_analogy": "the windswept reaches",
    "flora_analogy": "a hardy local plant",
    "building_analogy": "a sturdy timber building with a slate roof",
    "furniture_analogy": "a plain well-worn piece",
    "size_estimate": "2",
    "workplace_roles": '{"roles": ["farmer", "merchant", "blacksmith", '
                       '"teacher", "healer"]}',
    "family_lore": "A family long settled here, known to their neighbors.",
    "member_profile": '{"lore": "A steady local figure with an ordinary '
                      'past.", "traits": ["practical", "patient", "curious"]}',
    "seed_memory_family": "I remember growing up beside {other} in the "
                          "{surname} family.",
    "seed_memory_work": "I remember long days working with {other} at "
                        "{workplace}.",
    "seed_memory_acquaintance": "I remember meeting {other}; we share "
                                "{commonality}.",
    "daily_routine": '{"entries": []}',
    "reaction": "continue",
    "conversation_outline": "They exchange news about the day.",
    "utterance": "How have things been lately?",
    "proposal_detect": "no",
    "proposal_details": '{"activity": "meet again soon", "day_offset": 1, '
                        '"start": 1080, "end": 1200}',
    "plan_decision": "accept",
    "dialogue_end": "continue",
    "conversation_summary": "We caught up on recent happenings.",
    "reflection_insight": "The days here follow a steady rhythm.",
    "reflection_importance": "0.5",
    "trait_evolution": '{"add": null, "remove": null}',
    "plan_reconsider": "attend",
    "command_parse": '{"steps": []}',
    "interview_answer": "Life here keeps me busy, but I have no complaints.",
}


def default_script_table():
    """A script table whose per-template defaults keep a simulation running
    without any bespoke entries."""
    from .oracle import ScriptTable
    table = ScriptTable()
    for template_id, response in DEFAULT_RESPONSES.items():
        table.put_default(template_id, response)
    return table
