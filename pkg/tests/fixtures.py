"""Hand-built fixtures shared by the CLI and acceptance tests.

The planted-bias corpus gives group A (WM names) ten PER occurrences per
name and group B (BF names) one, with B names also showing up in location
and organization contexts, the way real newswire blurs rarely-seen names
across entity types. Capitalized non-entities and LOC/ORG mentions keep
word shape from deciding everything on its own.
"""

A_NAMES = ("Adam", "Paul", "Frank", "Greg")
B_NAMES = ("Aaliyah", "Ebony", "Latoya", "Nichelle")

# Pinned planted-bias training settings: full-batch (no holdout) so the run
# is a pure function of the corpus; 200 epochs is converged for this size.
PLANTED_SEED = 42
PLANTED_EPOCHS = 200
PLANTED_L2 = 1e-3

TOY_REGISTRY_TEXT = (
    "\n".join(f"{name},WM" for name in A_NAMES)
    + "\n"
    + "\n".join(f"{name},BF" for name in B_NAMES)
    + "\nSyedtiastephen,OOV\n"
)

TOY_TEMPLATES_TEXT = "{0} told {1} that {2} could pay with cash .\n"

_PER_CONTEXTS = (
    "{n}/B-PER said/O the/O deal/O was/O done/O ./O",
    "{n}/B-PER told/O Maxwell/B-PER that/O prices/O would/O rise/O ./O",
    "Officials/O said/O {n}/B-PER left/O the/O building/O ./O",
    "{n}/B-PER met/O fans/O in/O Boston/B-LOC ./O",
    "The/O spokesman/O said/O {n}/B-PER would/O resign/O ./O",
    "{n}/B-PER scored/O twice/O against/O Ajax/B-ORG ./O",
    "Analysts/O said/O {n}/B-PER could/O win/O the/O race/O ./O",
    "{n}/B-PER arrived/O late/O on/O Friday/O ./O",
    "Dunstan/B-PER told/O {n}/B-PER that/O Walcott/B-PER had/O agreed/O ./O",
    "{n}/B-PER beat/O Santos/B-ORG in/O straight/O sets/O ./O",
)

_B_NONPER_CONTEXTS = (
    "Flights/O to/O {n}/B-LOC resumed/O on/O Monday/O ./O",
    "They/O toured/O {n}/B-LOC last/O spring/O ./O",
    "Storms/O hit/O {n}/B-LOC early/O on/O Sunday/O ./O",
    "{n}/B-ORG published/O the/O story/O on/O Friday/O ./O",
    "Shares/O of/O {n}/B-ORG fell/O again/O ./O",
    "{n}/B-ORG hired/O two/O hundred/O workers/O ./O",
)

_GROUND_SENTENCES = (
    "The/O game/O ended/O without/O a/O winner/O ./O",
    "However/O ,/O the/O final/O was/O delayed/O ./O",
    "They/O met/O in/O Boston/B-LOC last/O night/O ./O",
    "Flights/O to/O Madrid/B-LOC resumed/O on/O Monday/O ./O",
    "Reuters/B-ORG reported/O the/O figures/O on/O Friday/O ./O",
    "Shares/O of/O Telecom/B-ORG fell/O sharply/O ./O",
    "Results/O from/O Geneva/B-LOC were/O delayed/O ./O",
    "Police/O said/O the/O road/O was/O closed/O ./O",
)

# Singleton person names (one PER occurrence each, never elsewhere): they
# teach the context -> PER generalization an unseen name relies on.
_SINGLETON_NAMES = (
    "Maxwell", "Dunstan", "Okafor", "Whitfield", "Delgado", "Osman",
    "Bryant", "Carver", "Harlan", "Ferreira", "Walcott", "Navarro",
)


def _render(line: str, name: str | None = None) -> str:
    rows = []
    for chunk in line.split():
        token, tag = chunk.rsplit("/", 1)
        rows.append(f"{token.format(n=name) if name else token} {tag}")
    return "\n".join(rows) + "\n"


def planted_training_conll() -> str:
    """Training text where A names are 10x more frequent as PER than B names."""
    blocks = []
    for name in A_NAMES:
        for context in _PER_CONTEXTS:
            blocks.append(_render(context, name))
    for name in B_NAMES:
        blocks.append(_render(_PER_CONTEXTS[2], name))
        for context in _B_NONPER_CONTEXTS:
            blocks.append(_render(context, name))
    for i, name in enumerate(_SINGLETON_NAMES):
        blocks.append(_render(_PER_CONTEXTS[i % len(_PER_CONTEXTS)], name))
    for line in _GROUND_SENTENCES:
        blocks.append(_render(line))
    return "\n".join(blocks) + "\n"


INSITU_FIXTURE_CONLL = """\
Charlton NNP I-NP I-PER
managed VBD I-VP O
Ireland NNP I-NP I-LOC
for IN I-PP O
93 CD I-NP O
matches NNS I-NP O
. . O O

Smith NNP I-NP I-PER
won VBD I-VP O
again RB I-ADVP O
. . O O

Keane NNP I-NP I-PER
and CC O O
Giggs NNP I-NP I-PER
missed VBD I-VP O
the DT I-NP O
final NN I-NP O
. . O O

Alex NNP I-NP I-PER
Ferguson NNP I-NP I-PER
praised VBD I-VP O
the DT I-NP O
young JJ I-NP O
squad NN I-NP O
. . O O

Rain NN I-NP O
stopped VBD I-VP O
play NN I-NP O
at IN I-PP O
Lords NNP I-NP I-LOC
yesterday RB I-ADVP O
. . O O

Cantona NNP I-NP I-PER
scored VBD I-VP O
twice RB I-ADVP O
against IN I-PP O
Leeds NNP I-NP I-ORG
United NNP I-NP I-ORG
. . O O

Milan NNP I-NP I-ORG
beat VBD I-VP O
Juventus NNP I-NP I-ORG
in IN I-PP O
Turin NNP I-NP I-LOC
. . O O

Seles NNP I-NP I-PER
won VBD I-VP O
6-1 CD I-NP O
6-2 CD I-NP O
. . O O

Scholes NNP I-NP I-PER
limped VBD I-VP O
off RP I-PRT O
after IN I-PP O
ten CD I-NP O
minutes NNS I-NP O
yesterday RB I-ADVP O
. . O O

The DT I-NP O
committee NN I-NP O
met VBD I-VP O
in IN I-PP O
Geneva NNP I-NP I-LOC
on IN I-PP O
Tuesday NNP I-NP O
. . O O

Advantage NN I-NP O
Agassi NNP I-NP I-PER
said VBD I-VP O
the DT I-NP O
umpire NN I-NP O
. . O O

Borussia NNP I-NP I-ORG
Dortmund NNP I-NP I-ORG
signed VBD I-VP O
Ricken NNP I-NP I-PER
until IN I-PP O
2000 CD I-NP O
. . O O
"""

# Indices of INSITU_FIXTURE_CONLL sentences passing the in-situ filter
# (> 5 tokens, exactly one PER entity, that entity a unigram), by hand:
#  0 Charlton (7 tokens, PER unigram)          -> keep
#  1 Smith (4 tokens)                          -> short
#  2 Keane/Giggs (7 tokens, two PER)           -> two entities
#  3 Alex Ferguson (7 tokens, bigram PER)      -> wide
#  4 Lords (7 tokens, no PER)                  -> no PER
#  5 Cantona (7 tokens, PER unigram + ORG)     -> keep
#  6 Milan/Juventus/Turin (6 tokens, no PER)   -> no PER
#  7 Seles (5 tokens)                          -> short
#  8 Scholes (8 tokens, PER unigram)           -> keep
#  9 Geneva committee (8 tokens, no PER)       -> no PER
# 10 Agassi (6 tokens, PER unigram)            -> keep
# 11 Ricken (7 tokens, PER unigram + ORG)      -> keep
INSITU_KEEP_INDICES = (0, 5, 8, 10, 11)
INSITU_PER_POSITIONS = {0: 0, 5: 0, 8: 0, 10: 1, 11: 3}
