"""Prompt templates.

The grounding templates ask the model to restate the target element before
anything else, so the descriptive tokens of the response can be matched and
grounded. The direct template instead requests an explicit box string for
baseline comparison.
"""

TEMPLATES = {
    "grounding": 'What is the bounding box of "{query_text}"',
    "direct": (
        'What is the bounding box of "{query_text}" in the image? '
        "The bounding box output format is: <box>xmin ymin xmax ymax</box>. "
        "Please directly output the bounding box."
    ),
    "agent": (
        "Goal: {query_text}\n"
        "Previous actions:\n{history}\n"
        "Describe the element to interact with next."
    ),
}


def render(name: str, query_text: str, history: str = "None") -> str:
    if name not in TEMPLATES:
        raise KeyError(f"unknown template {name!r}; choose from {sorted(TEMPLATES)}")
    return TEMPLATES[name].format(query_text=query_text, history=history)
