import math

# HPDI / ROPE thresholds
HPDI_MASS = 0.95
HPDI_MIN_SAMPLES = 20
ROPE_RATIO = 1.25
ROPE_UPPER = math.log(ROPE_RATIO)
ROPE_LOWER = -ROPE_UPPER

# Classification labels, in rule order
CLASSIFICATIONS = ['strong', 'weak', 'none', 'not_interpretable']
EFFECT_CLASSES = ('strong', 'weak')

# Old-vs-new comparison
MIN_MATCHED_KEYS = 10
MANHATTAN_LABELS = 5

# Results CSV contract (also the prior-results input format)
RESULT_COLUMNS = ['concept', 'category', 'level', 'mean', 'hpdi_low', 'hpdi_high', 'classification']

# Basic vocabulary lists: display name -> ConceptRecord flag
BASIC_LISTS = {
    'Swadesh-100': 'in_swadesh100',
    'Tadmor-100': 'in_tadmor100',
    'Holman-40': 'in_holman40',
}
