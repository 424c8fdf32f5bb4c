"""
Cleaning tweets
===============

URLs, mentions, emoji, punctuation and elongated letters are removed;
Arabic text also loses digits and Latin letters and has its alef, teh
marbuta and yeh variants folded.
"""

from offnet.textprep import CleanConfig, Vocab, clean_text, encode, prepare_contextual_input, tokenize

samples = [
    ("english", "@USER sooooo goooood!!! \U0001F602 https://t.co/xyz"),
    ("danish", "@USER Haha, det er genialt!"),
    ("arabic", "مبروووووك 2020 congrats"),
    ("arabic", "إلى المدرسة"),
    ("turkish", "@USER Burası da fena değil atkafalı"),
]
for lang, text in samples:
    cleaned = clean_text(text, CleanConfig(lang))
    print("%-8s %r -> %r" % (lang, text, cleaned))
    assert clean_text(cleaned, CleanConfig(lang)) == cleaned

# Fixed-length ids for the word-level models.
tokens = tokenize(clean_text("great day, great team!"))
vocab = Vocab.build([tokens])
print(encode(tokens, vocab, 6))

# Framing for a contextual encoder.
print(prepare_contextual_input(["good", "day"], 6))
