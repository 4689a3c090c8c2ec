package org.joda.time.format;

public class PeriodFormatterBuilder {
    private final StringBuilder pattern = new StringBuilder();

    public PeriodFormatterBuilder appendDays() {
        pattern.append("%d");
        return this;
    }

    public PeriodFormatterBuilder appendSuffix(String suffix) {
        pattern.append(suffix);
        return this;
    }

    public PeriodFormatter toFormatter() {
        return new PeriodFormatter(pattern.toString());
    }
}
