import pandas as pd
flights = pd.read_csv("flights.csv")
result = flights.query("stops == 0").sort_values("price").head(5).reset_index()
print(result.shape)
