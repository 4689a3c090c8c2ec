words = "the cat and the hat".split()
print(Counter(words).most_common(1))
